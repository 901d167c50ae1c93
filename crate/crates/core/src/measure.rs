//! Probability measures on a uniform one-dimensional grid: moments,
//! Wasserstein distances, heat-kernel evolution and truncation.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;

/// Uniform grid on `[-L, L]` with an odd number of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    half_width: f64,
    n_points: usize,
    spacing: f64,
    dim: usize,
}

impl SpatialGrid {
    pub fn new(half_width: f64, n_points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width {half_width} must be positive")));
        }
        if n_points < 3 || n_points % 2 == 0 {
            return Err(Error::InvalidGrid(format!("n_points {n_points} must be odd and >= 3")));
        }
        Ok(Self {
            half_width,
            n_points,
            spacing: 2.0 * half_width / (n_points - 1) as f64,
            dim: 1,
        })
    }

    pub fn shared(half_width: f64, n_points: usize) -> Result<Arc<Self>> {
        Self::new(half_width, n_points).map(Arc::new)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the node at the origin.
    pub fn center(&self) -> usize {
        (self.n_points - 1) / 2
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = (x / self.spacing).round() + self.center() as f64;
        k.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Index of `x` if it lies on a node (within 1e-9 of the spacing).
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.nearest_index(x);
        ((self.node(i) - x).abs() <= 1e-9 * self.spacing).then_some(i)
    }
}

/// Probability vector indexed by the nodes of a [`SpatialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Arc<SpatialGrid>,
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Builds a measure, rejecting negative weights or a total mass off 1 by more than 1e-12.
    pub fn new(grid: Arc<SpatialGrid>, weights: Vec<f64>) -> Result<Self> {
        check_weights(&grid, &weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("total mass {total} differs from 1")));
        }
        Ok(Self { grid, weights })
    }

    /// Builds a measure from nonnegative weights of positive total, dividing by the total.
    pub fn normalized(grid: Arc<SpatialGrid>, mut weights: Vec<f64>) -> Result<Self> {
        check_weights(&grid, &weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { grid, weights })
    }

    /// Unchecked weights, used where inputs must survive until validation.
    pub(crate) fn raw(grid: Arc<SpatialGrid>, weights: Vec<f64>) -> Self {
        Self { grid, weights }
    }

    pub fn dirac(grid: Arc<SpatialGrid>, i: usize) -> Result<Self> {
        if i >= grid.len() {
            return Err(Error::InvalidMeasure(format!("node {i} outside grid")));
        }
        let mut weights = vec![0.0; grid.len()];
        weights[i] = 1.0;
        Ok(Self { grid, weights })
    }

    /// Point masses at the nodes nearest to the given positions.
    pub fn from_atoms(grid: Arc<SpatialGrid>, atoms: &[(f64, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; grid.len()];
        for &(x, w) in atoms {
            weights[grid.nearest_index(x)] += w;
        }
        Self::normalized(grid, weights)
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn same_grid(&self, other: &GridMeasure) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Integral of `phi` against the measure.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(i, w)| w * phi(self.grid.node(i)))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// Second moment without the root, written |m|₂² in the text.
    pub fn second_moment(&self) -> f64 {
        self.integrate(|x| x * x)
    }

    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// `(1-r) self + r other`.
    pub fn mix(&self, other: &GridMeasure, r: f64) -> Result<GridMeasure> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - r) * a + r * b)
            .collect();
        GridMeasure::normalized(self.grid.clone(), weights)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "weight"])?;
        for (i, wt) in self.weights.iter().enumerate() {
            wtr.write_record([self.grid.node(i).to_string(), wt.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads `x,weight` rows; positions are snapped to the nearest node. Lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(grid: Arc<SpatialGrid>, r: R) -> Result<GridMeasure> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let mut weights = vec![0.0; grid.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Parse("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            let x = parse(0)?;
            let i = grid
                .index_of(x)
                .ok_or_else(|| Error::Parse(format!("position {x} is not a grid node")))?;
            weights[i] += parse(1)?;
        }
        GridMeasure::normalized(grid, weights)
    }
}

fn check_weights(grid: &SpatialGrid, weights: &[f64]) -> Result<()> {
    if weights.len() != grid.len() {
        return Err(Error::InvalidMeasure(format!(
            "{} weights for {} nodes",
            weights.len(),
            grid.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidMeasure(format!("weight {w} is not a nonnegative number")));
    }
    Ok(())
}

/// `(Σ w_i |x_i|^p)^{1/p}`.
pub fn moment_p(m: &GridMeasure, p: u32) -> f64 {
    let p = p.max(1) as i32;
    m.integrate(|x| x.abs().powi(p)).powf(1.0 / p as f64)
}

/// Total variation distance `sup_A |m(A) - m'(A)|`.
pub fn total_variation(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    Ok(0.5 * a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// `d₁` as `h Σ |F_m - F_m'|`.
pub fn wasserstein1(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let n = a.weights.len();
    let (mut fa, mut fb, mut acc) = (0.0, 0.0, 0.0);
    for i in 0..n - 1 {
        fa += a.weights[i];
        fb += b.weights[i];
        acc += (fa - fb).abs();
    }
    Ok(acc * a.grid.spacing())
}

/// `d₂` through the comonotone (quantile) coupling.
pub fn wasserstein2(a: &GridMeasure, b: &GridMeasure) -> Result<f64> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch);
    }
    let ca = a.cdf();
    let cb = b.cdf();
    let grid = &a.grid;
    let n = ca.len();
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut cost = 0.0;
    while i < n && j < n {
        let next = ca[i].min(cb[j]);
        if next > u {
            let d = grid.node(i) - grid.node(j);
            cost += (next - u) * d * d;
            u = next;
        }
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    Ok(cost.max(0.0).sqrt())
}

/// Discrete Gaussian on `hℤ`: normalized masses at offsets `0..n` and tail sums beyond.
struct GaussProfile {
    mass: Vec<f64>,
    tail: Vec<f64>,
    /// Unnormalized mass of row `i`.
    norm: Vec<f64>,
}

impl GaussProfile {
    fn new(grid: &SpatialGrid, delta: f64) -> Self {
        let n = grid.len();
        let h = grid.spacing();
        let mut g = Vec::with_capacity(n + 1);
        let mut k = 0usize;
        loop {
            let x = k as f64 * h;
            let v = (-x * x / (2.0 * delta)).exp();
            if v == 0.0 && k > n {
                break;
            }
            g.push(v);
            k += 1;
        }
        let z = g[0] + 2.0 * g[1..].iter().sum::<f64>();
        // suffix[k] = Σ_{k' ≥ k} g[k'], summed from the small end.
        let mut suffix = vec![0.0; g.len() + 1];
        for k in (0..g.len()).rev() {
            suffix[k] = suffix[k + 1] + g[k];
        }
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        let mass: Vec<f64> = (0..n).map(|k| at(&g, k) / z).collect();
        let tail: Vec<f64> = (0..=n).map(|k| at(&suffix, k) / z).collect();
        let mut prefix = vec![0.0; n];
        let mut acc = 0.0;
        for (p, m) in prefix.iter_mut().zip(&mass) {
            acc += m;
            *p = acc;
        }
        let norm = (0..n)
            .map(|i| prefix[i] + prefix[n - 1 - i] - mass[0] + tail[i + 1] + tail[n - i])
            .collect();
        Self { mass, tail, norm }
    }

    fn fill_row(&self, i: usize, row: &mut [f64]) {
        let n = row.len();
        let c = 1.0 / self.norm[i];
        for (j, r) in row.iter_mut().enumerate() {
            *r = c * self.mass[i.abs_diff(j)];
        }
        row[0] += c * self.tail[i + 1];
        row[n - 1] += c * self.tail[n - i];
    }

    /// `out += w · row(i)` without materializing the row.
    fn add_row(&self, i: usize, w: f64, out: &mut [f64]) {
        let n = out.len();
        let c = w / self.norm[i];
        let (left, right) = out.split_at_mut(i);
        for (o, m) in left.iter_mut().rev().zip(&self.mass[1..]) {
            *o += c * m;
        }
        for (o, m) in right.iter_mut().zip(&self.mass) {
            *o += c * m;
        }
        out[0] += c * self.tail[i + 1];
        out[n - 1] += c * self.tail[n - i];
    }
}

/// Row-stochastic matrix of the clamped heat semigroup over an elapsed time.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    grid: Arc<SpatialGrid>,
    elapsed: f64,
    rows: Vec<f64>,
}

impl TransitionKernel {
    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.rows[i * n..(i + 1) * n]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.grid.len() + j]
    }

    /// `m · K`, renormalized.
    pub fn apply(&self, m: &GridMeasure) -> Result<GridMeasure> {
        if *m.grid != *self.grid {
            return Err(Error::GridMismatch);
        }
        let n = self.grid.len();
        let mut out = vec![0.0; n];
        for (i, &w) in m.weights.iter().enumerate() {
            if w != 0.0 {
                for (o, k) in out.iter_mut().zip(self.row(i)) {
                    *o += w * k;
                }
            }
        }
        GridMeasure::normalized(m.grid.clone(), out)
    }
}

/// Heat kernel over elapsed time `delta`: clamp-truncated discrete Gaussians of variance `delta`.
pub fn heat_kernel(grid: Arc<SpatialGrid>, delta: f64) -> Result<TransitionKernel> {
    if !(delta > 0.0) {
        return Err(Error::NonPositiveElapsed(delta));
    }
    let n = grid.len();
    let profile = GaussProfile::new(&grid, delta);
    let mut rows = vec![0.0; n * n];
    for (i, row) in rows.chunks_mut(n).enumerate() {
        profile.fill_row(i, row);
    }
    Ok(TransitionKernel {
        grid,
        elapsed: delta,
        rows,
    })
}

/// Law at time `s` of the clamped grid chain started with law `m` at time `t`.
pub fn heat_evolve(m: &GridMeasure, t: f64, s: f64) -> Result<GridMeasure> {
    if s < t {
        return Err(Error::BackwardTime { t, s });
    }
    if s == t {
        return Ok(m.clone());
    }
    let grid = m.grid.clone();
    let n = grid.len();
    let profile = GaussProfile::new(&grid, s - t);
    let mut out = vec![0.0; n];
    for (i, &w) in m.weights.iter().enumerate() {
        if w != 0.0 {
            profile.add_row(i, w, &mut out);
        }
    }
    GridMeasure::normalized(grid, out)
}

/// Moves the mass at nodes with `|x| > R` to the nearest node with `|x| ≤ R`.
pub fn clamp_pushforward(m: &GridMeasure, radius: f64) -> Result<GridMeasure> {
    let grid = m.grid.clone();
    if !(radius > 0.0) || radius > grid.half_width() * (1.0 + 1e-12) {
        return Err(Error::InvalidRadius(radius));
    }
    let c = grid.center();
    let k = ((radius / grid.spacing()) + 1e-9).floor() as usize;
    let (lo, hi) = (c - k.min(c), c + k.min(c));
    let mut weights = m.weights.clone();
    for i in 0..weights.len() {
        if i < lo || i > hi {
            let w = std::mem::take(&mut weights[i]);
            weights[if i < lo { lo } else { hi }] += w;
        }
    }
    Ok(GridMeasure { grid, weights })
}
