//! Independent reference computations shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::HashMap;

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use winfo_core::measure::{heat_evolve, GridMeasure};
use winfo_core::partition::Partition;
use winfo_core::payoff::PayoffSpec;

/// Optimal transport cost `min Σ π_ij |x_i − y_j|^p` by a generic LP over the two supports.
pub fn transport_cost(a: &GridMeasure, b: &GridMeasure, p: i32) -> f64 {
    let grid = a.grid();
    let sa = a.support();
    let sb = b.support();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![vec![]; sa.len()];
    for (i, &xi) in sa.iter().enumerate() {
        for &yj in &sb {
            let d = (grid.node(xi) - grid.node(yj)).abs().powi(p);
            vars[i].push(lp.add_var(d, (0.0, f64::INFINITY)));
        }
    }
    for (i, &xi) in sa.iter().enumerate() {
        let mut e = LinearExpr::empty();
        for v in &vars[i] {
            e.add(*v, 1.0);
        }
        lp.add_constraint(e, ComparisonOp::Eq, a.weight(xi));
    }
    for (j, &yj) in sb.iter().enumerate() {
        let mut e = LinearExpr::empty();
        for row in &vars {
            e.add(row[j], 1.0);
        }
        lp.add_constraint(e, ComparisonOp::Eq, b.weight(yj));
    }
    lp.solve().expect("transport LP solves").objective()
}

/// Value of a 2×2 zero-sum game (row minimizes): saddle point if any, else the mixed formula.
pub fn game_2x2(a: &[Vec<f64>]) -> f64 {
    let minmax = a.iter().map(|r| r[0].max(r[1])).fold(f64::INFINITY, f64::min);
    let maxmin = (0..2).map(|j| a[0][j].min(a[1][j])).fold(f64::NEG_INFINITY, f64::max);
    if (minmax - maxmin).abs() < 1e-14 {
        return minmax;
    }
    let (p, q, r, s) = (a[0][0], a[0][1], a[1][0], a[1][1]);
    (p * s - q * r) / (p + s - q - r)
}

fn solve_dense(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let k = m.len();
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    Some((0..k).map(|i| m[i][k] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..1usize << n).filter(|b| b.count_ones() as usize == k).map(|b| (0..n).filter(|i| b >> i & 1 == 1).collect()).collect()
}

/// Value of a square or rectangular zero-sum game by support enumeration (row minimizes).
pub fn game_support_enumeration(a: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), a[0].len());
    let tol = 1e-10;
    for k in 1..=m.min(n) {
        for rows in subsets(m, k) {
            for cols in subsets(n, k) {
                // Row mix x on `rows` equalizing the payoff on `cols`; unknowns x_i and v.
                let mut sys = Vec::new();
                for &j in &cols {
                    let mut eq: Vec<f64> = rows.iter().map(|&i| a[i][j]).collect();
                    eq.push(-1.0);
                    eq.push(0.0);
                    sys.push(eq);
                }
                let mut norm = vec![1.0; k];
                norm.extend([0.0, 1.0]);
                sys.push(norm);
                let Some(xv) = solve_dense(sys) else { continue };
                let (x, v) = (&xv[..k], xv[k]);
                let mut sys = Vec::new();
                for &i in &rows {
                    let mut eq: Vec<f64> = cols.iter().map(|&j| a[i][j]).collect();
                    eq.push(-1.0);
                    eq.push(0.0);
                    sys.push(eq);
                }
                let mut norm = vec![1.0; k];
                norm.extend([0.0, 1.0]);
                sys.push(norm);
                let Some(yw) = solve_dense(sys) else { continue };
                let y = &yw[..k];
                if x.iter().chain(y).any(|p| *p < -tol) {
                    continue;
                }
                let col_ok = (0..n).all(|j| rows.iter().zip(x).map(|(&i, p)| p * a[i][j]).sum::<f64>() <= v + tol);
                let row_ok = (0..m).all(|i| cols.iter().zip(y).map(|(&j, p)| p * a[i][j]).sum::<f64>() >= v - tol);
                if col_ok && row_ok {
                    return v;
                }
            }
        }
    }
    panic!("no equilibrium found by support enumeration");
}

/// Lower convex envelope on a one-dimensional lattice by exhaustive search over pairs.
///
/// `points[k]` is the first coordinate. A mixture of three or more points with a fixed
/// barycenter is a convex combination of two-point mixtures, so pairs and singletons suffice.
pub fn brute_vex_1d(points: &[f64], g: &[f64], query: f64) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..points.len() {
        if (points[a] - query).abs() < 1e-12 {
            best = best.min(g[a]);
        }
        for b in 0..points.len() {
            if points[a] < query - 1e-12 && points[b] > query + 1e-12 {
                let w = (query - points[a]) / (points[b] - points[a]);
                best = best.min((1.0 - w) * g[a] + w * g[b]);
            }
        }
    }
    best
}

/// Minimum over every singleton, pair and triple of lattice points whose mixture has barycenter `query`.
///
/// For a triple the feasible weights form a segment in `λ_b`; the linear objective is minimized at an end.
pub fn brute_vex_1d_triples(points: &[f64], g: &[f64], query: f64) -> f64 {
    let mut best = brute_vex_1d(points, g, query);
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| points[i].total_cmp(&points[j]));
    let n = idx.len();
    for x in 0..n {
        for y in x + 1..n {
            for z in y + 1..n {
                let (a, b, c) = (idx[x], idx[y], idx[z]);
                let (pa, pb, pc) = (points[a], points[b], points[c]);
                if !(pa < query && query < pc) || pb <= pa || pc <= pb {
                    continue;
                }
                let lmax = ((query - pa) / (pb - pa)).min((pc - query) / (pc - pb)).min(1.0);
                for lb in [0.0, lmax] {
                    let lc = (query - pa - lb * (pb - pa)) / (pc - pa);
                    let la = 1.0 - lb - lc;
                    best = best.min(la * g[a] + lb * g[b] + lc * g[c]);
                }
            }
        }
    }
    best
}

/// Best expected cost over every lattice-valued splitting tree of a two-point support.
///
/// Beliefs are the heat flows of `p δ_{x₀} + (1−p) δ_{x₁}` computed directly, and the stage value
/// uses the closed-form 2×2 game value. Subtrees are independent, so the search memoizes per (stage, point).
pub struct TreeEnumeration<'a> {
    pub spec: &'a PayoffSpec,
    pub partition: &'a Partition,
    pub prior_atoms: [GridMeasure; 2],
    pub resolution: usize,
    memo: HashMap<(usize, usize), f64>,
}

impl<'a> TreeEnumeration<'a> {
    pub fn new(spec: &'a PayoffSpec, partition: &'a Partition, prior_atoms: [GridMeasure; 2], resolution: usize) -> Self {
        Self { spec, partition, prior_atoms, resolution, memo: HashMap::new() }
    }

    /// Law at stage `q` of the lattice point `k/r`.
    pub fn belief(&self, q: usize, k: usize) -> GridMeasure {
        let p = k as f64 / self.resolution as f64;
        let m = self.prior_atoms[1].mix(&self.prior_atoms[0], p).unwrap();
        let mut cur = m;
        for s in 0..q {
            cur = heat_evolve(&cur, self.partition.time(s), self.partition.time(s + 1)).unwrap();
        }
        cur
    }

    fn stage_cost(&self, q: usize, k: usize) -> f64 {
        let m = self.belief(q, k);
        let t = self.partition.time(q);
        let grid = m.grid();
        let mut a = vec![vec![0.0; 2]; 2];
        for (i, w) in m.weights().iter().enumerate() {
            for u in 0..2 {
                for v in 0..2 {
                    a[u][v] += w * self.spec.eval(t, grid.node(i), u, v);
                }
            }
        }
        self.partition.step(q) * game_2x2(&a)
    }

    /// Expected cost after stage `q` splitting of a predicted point `k`: best over all splittings.
    fn continuation(&mut self, q: usize, k: usize) -> f64 {
        if q == self.partition.n_steps() {
            return 0.0;
        }
        if let Some(v) = self.memo.get(&(q, k)) {
            return *v;
        }
        let r = self.resolution;
        let leaf: Vec<f64> = (0..=r).map(|j| self.stage_cost(q, j) + self.continuation(q + 1, j)).collect();
        let mut best = leaf[k];
        for a in 0..k {
            for b in k + 1..=r {
                let w = (k - a) as f64 / (b - a) as f64;
                best = best.min((1.0 - w) * leaf[a] + w * leaf[b]);
            }
        }
        self.memo.insert((q, k), best);
        best
    }

    /// Best tree cost from the prior at lattice point `k`.
    pub fn value(&mut self, k: usize) -> f64 {
        self.continuation(0, k)
    }
}
