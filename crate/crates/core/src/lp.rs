//! Dense two-phase simplex method with Bland's rule.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows.
    pub duals: Vec<f64>,
    /// `c_j - duals·A_j` for every structural column.
    pub reduced_costs: Vec<f64>,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                    row[c] = 0.0;
                }
            }
        }
        self.basis[r] = c;
    }

    fn reduced(&self, cost: &[f64], j: usize) -> f64 {
        cost[j]
            - self
                .basis
                .iter()
                .zip(&self.rows)
                .map(|(&b, row)| cost[b] * row[j])
                .sum::<f64>()
    }

    /// Runs simplex iterations on columns `0..allowed` until optimal.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        for _ in 0..MAX_ITER {
            let Some(enter) = (0..allowed).find(|&j| self.reduced(cost, j) < -COST_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(Error::Unbounded),
            }
        }
        Err(Error::InvalidArgument("simplex iteration limit reached".into()))
    }
}

/// Minimizes `c·x` subject to `A x = b`, `x ≥ 0`.
pub fn minimize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidMatrix("inconsistent linear program dimensions".into()));
    }
    let width = n + m;
    let mut sign = vec![1.0; m];
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        if b[i] < 0.0 {
            sign[i] = -1.0;
        }
        let mut row = vec![0.0; width + 1];
        for j in 0..n {
            row[j] = sign[i] * a[i][j];
        }
        row[n + i] = 1.0;
        row[width] = sign[i] * b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..width).collect(),
        width,
    };

    let mut phase1 = vec![0.0; width];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    t.optimize(&phase1, n)?;
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.rhs(i)).sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if infeasibility > FEAS_TOL * scale {
        return Err(Error::Infeasible);
    }
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(c);
    t.optimize(&phase2, n)?;

    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rhs(i).max(0.0);
        }
    }
    let duals: Vec<f64> = (0..m)
        .map(|i| {
            sign[i]
                * t.basis
                    .iter()
                    .zip(&t.rows)
                    .map(|(&bv, row)| phase2[bv] * row[n + i])
                    .sum::<f64>()
        })
        .collect();
    let reduced_costs = (0..n)
        .map(|j| c[j] - (0..m).map(|i| duals[i] * a[i][j]).sum::<f64>())
        .collect();
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpSolution {
        x,
        objective,
        duals,
        reduced_costs,
    })
}
