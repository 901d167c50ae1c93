//! Matrix games and the Hamiltonian `H(t, m)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lp;
use crate::measure::{wasserstein1, GridMeasure, SpatialGrid};
use crate::payoff::PayoffSpec;

use std::sync::Arc;

/// Mixed solution of a zero-sum matrix game; the row player minimizes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameSolution {
    /// `max_j (row · A)_j`, the amount the row mix guarantees.
    pub value: f64,
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

fn check_matrix(a: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    if a.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidMatrix("rows of different lengths".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("non-finite entry".into()));
    }
    Ok((rows, cols))
}

fn clean(p: &mut [f64]) {
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
}

/// Solves the game by one simplex run on the column player's program; the row mix comes from its duals.
pub fn matrix_game_value(a: &[Vec<f64>]) -> Result<MatrixGameSolution> {
    let (rows, cols) = check_matrix(a)?;
    let lo = a.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
    let shift = 1.0 - lo;
    // min Σz  s.t.  (A + shift) z - s = 1,  z, s ≥ 0.
    let mut c = vec![0.0; cols + rows];
    c[..cols].iter_mut().for_each(|v| *v = 1.0);
    let lhs: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut r = vec![0.0; cols + rows];
            for j in 0..cols {
                r[j] = a[i][j] + shift;
            }
            r[cols + i] = -1.0;
            r
        })
        .collect();
    let sol = lp::minimize(&c, &lhs, &vec![1.0; rows])?;
    let mut col = sol.x[..cols].to_vec();
    let mut row = sol.duals.clone();
    clean(&mut col);
    clean(&mut row);
    let value = (0..cols)
        .map(|j| (0..rows).map(|i| row[i] * a[i][j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MatrixGameSolution { value, row, col })
}

/// `(min_u max_v A, max_v min_u A)`.
pub fn pure_values(a: &[Vec<f64>]) -> Result<(f64, f64)> {
    let (rows, cols) = check_matrix(a)?;
    let minmax = (0..rows)
        .map(|i| a[i].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let maxmin = (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((minmax, maxmin))
}

/// `A_{uv} = Σ_i w_i f(t, x_i, u, v)`.
pub fn payoff_matrix(spec: &PayoffSpec, t: f64, m: &GridMeasure) -> Vec<Vec<f64>> {
    let grid = m.grid();
    let mut a = vec![vec![0.0; spec.n_v()]; spec.n_u()];
    for (i, &w) in m.weights().iter().enumerate() {
        if w != 0.0 {
            let x = grid.node(i);
            for (u, row) in a.iter_mut().enumerate() {
                for (v, e) in row.iter_mut().enumerate() {
                    *e += w * spec.eval(t, x, u, v);
                }
            }
        }
    }
    a
}

/// Mixed value of the infinitesimal game at `(t, m)`.
pub fn hamiltonian_value(spec: &PayoffSpec, t: f64, m: &GridMeasure) -> Result<MatrixGameSolution> {
    if !spec.in_horizon(t) {
        let (start, end) = spec.horizon();
        return Err(Error::OutsideHorizon { t, start, end });
    }
    matrix_game_value(&payoff_matrix(spec, t, m))
}

pub fn hamiltonian(spec: &PayoffSpec, t: f64, m: &GridMeasure) -> Result<f64> {
    hamiltonian_value(spec, t, m).map(|s| s.value)
}

/// Pure minmax minus pure maxmin of the matrix at `(t, m)`.
pub fn isaacs_gap(spec: &PayoffSpec, t: f64, m: &GridMeasure) -> f64 {
    let (minmax, maxmin) = pure_values(&payoff_matrix(spec, t, m)).expect("spec matrices are nonempty");
    minmax - maxmin
}

/// Random measure with up to `max_atoms` atoms inside `[-radius, radius]`.
pub fn random_measure(grid: &Arc<SpatialGrid>, rng: &mut impl Rng, max_atoms: usize, radius: f64) -> GridMeasure {
    let k = ((radius / grid.spacing()) as i64).min(grid.center() as i64);
    let c = grid.center() as i64;
    let atoms = rng.random_range(1..=max_atoms);
    let mut w = vec![0.0; grid.len()];
    for _ in 0..atoms {
        let i = (c + rng.random_range(-k..=k)) as usize;
        w[i] += rng.random_range(0.05..1.0);
    }
    GridMeasure::normalized(grid.clone(), w).expect("positive weights")
}

/// Largest sampled `|H(t,m) - H(t,m')| / d₁(m,m')`.
pub fn lipschitz_probe(spec: &PayoffSpec, grid: &Arc<SpatialGrid>, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t0, t1) = spec.horizon();
    let mut worst = 0.0f64;
    for k in 0..samples {
        let t = rng.random_range(t0..=t1);
        let a = random_measure(grid, &mut rng, 6, grid.half_width());
        let b = if k % 2 == 0 {
            random_measure(grid, &mut rng, 6, grid.half_width())
        } else {
            shifted(&a, rng.random_range(1..=grid.center() / 2))
        };
        let d = wasserstein1(&a, &b)?;
        if d > 0.0 {
            let dh = (hamiltonian(spec, t, &a)? - hamiltonian(spec, t, &b)?).abs();
            worst = worst.max(dh / d);
        }
    }
    Ok(worst)
}

/// Translation by `k` nodes to the right, piling mass that would leave the grid on the last node.
fn shifted(m: &GridMeasure, k: usize) -> GridMeasure {
    let n = m.weights().len();
    let mut w = vec![0.0; n];
    for (i, &x) in m.weights().iter().enumerate() {
        w[(i + k).min(n - 1)] += x;
    }
    GridMeasure::normalized(m.grid().clone(), w).expect("shift keeps mass")
}
