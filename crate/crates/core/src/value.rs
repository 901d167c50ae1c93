//! Non-revealing baseline and the backward vex recursion over a belief lattice.
//!
//! A lattice point `p` at stage `q` stands for the measure `R_q(p) = Σ_j p_j ν_{q,j}`,
//! where `ν_{0,j} = δ_{x_j}` and `ν_{q+1,j}` is the heat flow of `ν_{q,j}` over stage `q`.
//! The heat flow then maps `R_q(p)` to `R_{q+1}(p)`, so coordinates are preserved
//! between partition times and splittings act on coordinates linearly.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian, matrix_game_value, payoff_matrix};
use crate::lp;
use crate::martingale::{MartingaleTree, SplittingPlan};
use crate::measure::{GridMeasure, SpatialGrid};
use crate::partition::Partition;
use crate::payoff::PayoffSpec;

const COORD_TOL: f64 = 1e-12;
const PLAN_TOL: f64 = 1e-10;
const PIVOT_MIN: f64 = 1e-8;
/// Above this many supporting atoms the plan is read off the LP basis instead of enumerated.
const MAX_CANDIDATES: usize = 40;

/// Probability vectors over `S` support nodes with coordinates in `{0, 1/r, …, 1}`, plus extra points.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefLattice {
    grid: Arc<SpatialGrid>,
    support: Vec<usize>,
    resolution: usize,
    points: Vec<Vec<f64>>,
    regular: usize,
}

fn compositions(s: usize, r: usize) -> Vec<Vec<usize>> {
    if s == 1 {
        return vec![vec![r]];
    }
    let mut out = Vec::new();
    for k in 0..=r {
        for mut rest in compositions(s - 1, r - k) {
            rest.insert(0, k);
            out.push(rest);
        }
    }
    out
}

impl BeliefLattice {
    pub fn new(grid: Arc<SpatialGrid>, support_positions: &[f64], resolution: usize) -> Result<Self> {
        if support_positions.is_empty() {
            return Err(Error::InvalidLattice("empty support".into()));
        }
        if resolution == 0 {
            return Err(Error::InvalidLattice("resolution must be positive".into()));
        }
        let mut support = Vec::with_capacity(support_positions.len());
        for &x in support_positions {
            let i = grid
                .index_of(x)
                .ok_or_else(|| Error::InvalidLattice(format!("support point {x} is not a grid node")))?;
            if support.contains(&i) {
                return Err(Error::InvalidLattice(format!("support point {x} repeated")));
            }
            support.push(i);
        }
        let r = resolution as f64;
        let points: Vec<Vec<f64>> = compositions(support.len(), resolution)
            .into_iter()
            .map(|k| k.into_iter().map(|k| k as f64 / r).collect())
            .collect();
        let regular = points.len();
        Ok(Self {
            grid,
            support,
            resolution,
            points,
            regular,
        })
    }

    /// Adds probability vectors over the support; ones already present are skipped.
    pub fn with_extra_points(mut self, extras: &[Vec<f64>]) -> Result<Self> {
        for p in extras {
            let p = self.check_coords(p)?;
            if self.find(&p).is_none() {
                self.points.push(p);
            }
        }
        Ok(self)
    }

    fn check_coords(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.support.len() {
            return Err(Error::InvalidLattice(format!(
                "point has {} coordinates, support has {}",
                p.len(),
                self.support.len()
            )));
        }
        if p.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidLattice("coordinates must be nonnegative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLattice(format!("coordinates sum to {s}")));
        }
        Ok(p.iter().map(|c| c / s).collect())
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    /// Grid indices of the support nodes.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn support_positions(&self) -> Vec<f64> {
        self.support.iter().map(|&i| self.grid.node(i)).collect()
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.points[id]
    }

    /// Number of points before the extras.
    pub fn regular_len(&self) -> usize {
        self.regular
    }

    pub fn find(&self, coords: &[f64]) -> Option<usize> {
        self.points
            .iter()
            .position(|p| p.iter().zip(coords).all(|(a, b)| (a - b).abs() <= COORD_TOL))
    }

    /// Id of `δ_{x_j}`.
    pub fn vertex(&self, j: usize) -> usize {
        let mut e = vec![0.0; self.dim()];
        e[j] = 1.0;
        self.find(&e).expect("vertices are lattice points")
    }

    /// `(1/S, …, 1/S)`.
    pub fn barycenter(&self) -> Vec<f64> {
        vec![1.0 / self.dim() as f64; self.dim()]
    }

    /// `Σ_j p_j δ_{x_j}`.
    pub fn embed(&self, coords: &[f64]) -> Result<GridMeasure> {
        let c = self.check_coords(coords)?;
        let mut w = vec![0.0; self.grid.len()];
        for (j, &i) in self.support.iter().enumerate() {
            w[i] += c[j];
        }
        GridMeasure::normalized(self.grid.clone(), w)
    }

    /// Triples `(p, mid, p')` of regular points with `mid = (p + p')/2`.
    pub fn segments(&self) -> Vec<(usize, usize, usize)> {
        let r = self.resolution as f64;
        let ints: Vec<Vec<i64>> = self.points[..self.regular]
            .iter()
            .map(|p| p.iter().map(|c| (c * r).round() as i64).collect())
            .collect();
        let mut out = Vec::new();
        for a in 0..self.regular {
            for b in a + 1..self.regular {
                if ints[a].iter().zip(&ints[b]).all(|(x, y)| (x + y) % 2 == 0) {
                    let mid: Vec<f64> = ints[a].iter().zip(&ints[b]).map(|(x, y)| ((x + y) / 2) as f64 / r).collect();
                    if let Some(m) = self.find(&mid) {
                        out.push((a, m, b));
                    }
                }
            }
        }
        out
    }

    /// Voronoi cell of every grid node among the support, equidistant nodes split evenly.
    fn cell_weights(&self) -> Vec<Vec<(usize, f64)>> {
        let pos = self.support_positions();
        (0..self.grid.len())
            .map(|i| {
                let x = self.grid.node(i);
                let d: Vec<f64> = pos.iter().map(|p| (x - p).abs()).collect();
                let best = d.iter().copied().fold(f64::INFINITY, f64::min);
                let near: Vec<usize> = (0..d.len()).filter(|&j| d[j] <= best + 1e-12).collect();
                let share = 1.0 / near.len() as f64;
                near.into_iter().map(|j| (j, share)).collect()
            })
            .collect()
    }

    fn cell_masses(&self, cells: &[Vec<(usize, f64)>], m: &GridMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, &w) in m.weights().iter().enumerate() {
            if w != 0.0 {
                for &(j, s) in &cells[i] {
                    out[j] += s * w;
                }
            }
        }
        out
    }
}

/// Splitting of a lattice point into lattice atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePlan {
    pub atoms: Vec<usize>,
    pub weights: Vec<f64>,
}

impl LatticePlan {
    pub fn singleton(id: usize) -> Self {
        Self {
            atoms: vec![id],
            weights: vec![1.0],
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.atoms.len() == 1
    }
}

/// Solves `Σ λ_i p_{a_i} = c` for the given atoms by least squares; `None` unless exact and nonnegative.
fn barycentric(points: &[Vec<f64>], atoms: &[usize], c: &[f64]) -> Option<Vec<f64>> {
    let k = atoms.len();
    let mut gram = vec![vec![0.0; k + 1]; k];
    for a in 0..k {
        for b in 0..k {
            gram[a][b] = points[atoms[a]].iter().zip(&points[atoms[b]]).map(|(x, y)| x * y).sum();
        }
        gram[a][k] = points[atoms[a]].iter().zip(c).map(|(x, y)| x * y).sum();
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| gram[i][col].abs().total_cmp(&gram[j][col].abs()))?;
        if gram[piv][col].abs() < 1e-12 {
            return None;
        }
        gram.swap(col, piv);
        for row in 0..k {
            if row != col {
                let f = gram[row][col] / gram[col][col];
                for j in col..=k {
                    gram[row][j] -= f * gram[col][j];
                }
            }
        }
    }
    let lambda: Vec<f64> = (0..k).map(|i| gram[i][k] / gram[i][i]).collect();
    if lambda.iter().any(|l| *l < -PLAN_TOL) {
        return None;
    }
    let lambda: Vec<f64> = lambda.into_iter().map(|l| l.max(0.0)).collect();
    let residual = (0..c.len())
        .map(|d| (atoms.iter().zip(&lambda).map(|(&a, l)| l * points[a][d]).sum::<f64>() - c[d]).abs())
        .fold(0.0, f64::max);
    if residual > PLAN_TOL {
        return None;
    }
    let s: f64 = lambda.iter().sum();
    Some(lambda.into_iter().map(|l| l / s).collect())
}

fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Lower convex envelope of the sampled graph `(points, g)` at `query`, with its supporting plan.
///
/// Among optimal plans the one with fewest atoms, then lexicographically smallest ids, is returned.
pub fn vex_on_lattice(points: &[Vec<f64>], g: &[f64], query: &[f64]) -> Result<(f64, LatticePlan)> {
    if points.len() != g.len() || points.is_empty() {
        return Err(Error::InvalidLattice("one value per lattice point required".into()));
    }
    let s = query.len();
    if points.iter().any(|p| p.len() != s) {
        return Err(Error::InvalidLattice("query and points differ in dimension".into()));
    }
    let rows: Vec<Vec<f64>> = (0..s).map(|d| points.iter().map(|p| p[d]).collect()).collect();
    let sol = lp::minimize(g, &rows, query).map_err(|e| match e {
        Error::Infeasible => Error::InvalidLattice("query outside the lattice hull".into()),
        other => other,
    })?;
    let scale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let candidates: Vec<usize> = (0..g.len()).filter(|&k| sol.reduced_costs[k] <= tol).collect();
    let value_of = |plan: &LatticePlan| plan.atoms.iter().zip(&plan.weights).map(|(&a, w)| w * g[a]).sum::<f64>();
    let accept = |plan: LatticePlan| {
        let v = value_of(&plan);
        (v <= sol.objective + tol).then_some((v, plan))
    };
    let max_k = if candidates.len() <= MAX_CANDIDATES { s.min(candidates.len()) } else { 1 };
    for k in 1..=max_k {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let atoms: Vec<usize> = idx.iter().map(|&i| candidates[i]).collect();
            if let Some(weights) = barycentric(points, &atoms, query) {
                let (atoms, weights): (Vec<usize>, Vec<f64>) =
                    atoms.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).unzip();
                if atoms.len() == k {
                    if let Some(found) = accept(LatticePlan { atoms, weights }) {
                        return Ok(found);
                    }
                }
            }
            if !next_subset(&mut idx, candidates.len()) {
                break;
            }
        }
    }
    let (atoms, weights): (Vec<usize>, Vec<f64>) =
        (0..g.len()).filter(|&k| sol.x[k] > 0.0).map(|k| (k, sol.x[k])).unzip();
    let total: f64 = weights.iter().sum();
    let plan = LatticePlan {
        atoms,
        weights: weights.into_iter().map(|w| w / total).collect(),
    };
    Ok((value_of(&plan), plan))
}

/// Left-endpoint sum `Σ_q Δ_q H(t_q, m_q)` with `m_q` the heat flow of `m` along the partition.
pub fn non_revealing_value(spec: &PayoffSpec, m: &GridMeasure, partition: &Partition) -> Result<f64> {
    let mut cur = m.clone();
    let mut total = 0.0;
    for q in 0..partition.n_steps() {
        if q > 0 {
            cur = partition.flow(&cur, q - 1, q)?;
        }
        total += partition.step(q) * hamiltonian(spec, partition.time(q), &cur)?;
    }
    Ok(total)
}

/// Value, stage costs and plans on a lattice, for every partition time.
#[derive(Debug, Clone)]
pub struct ValueTable {
    partition: Partition,
    lattice: BeliefLattice,
    /// `ν_{q,j}` for `q = 0..=N`.
    basis: Vec<Vec<GridMeasure>>,
    cells: Vec<Vec<(usize, f64)>>,
    /// `H(t_q, R_q(p))` for `q < N`.
    hamilton: Vec<Vec<f64>>,
    /// `Δ_q H(t_q, R_q(p)) + V_{q+1}(p)` for `q < N`.
    costs: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    plans: Vec<Vec<LatticePlan>>,
}

fn combine(basis: &[GridMeasure], coords: &[f64]) -> GridMeasure {
    let grid = basis[0].grid().clone();
    let mut w = vec![0.0; grid.len()];
    for (nu, &c) in basis.iter().zip(coords) {
        if c != 0.0 {
            for (o, x) in w.iter_mut().zip(nu.weights()) {
                *o += c * x;
            }
        }
    }
    GridMeasure::normalized(grid, w).expect("convex combination of probability measures")
}

/// Runs the backward recursion `V_N = 0`, `V_q = vex(Δ_q H(t_q, R_q(·)) + V_{q+1})`.
pub fn solve_value(spec: &PayoffSpec, partition: &Partition, lattice: &BeliefLattice) -> Result<ValueTable> {
    let n = partition.n_steps();
    if !spec.in_horizon(partition.start()) || !spec.in_horizon(partition.end()) {
        let (start, end) = spec.horizon();
        return Err(Error::OutsideHorizon {
            t: partition.start(),
            start,
            end,
        });
    }
    let grid = lattice.grid().clone();
    let mut basis = vec![lattice
        .support()
        .iter()
        .map(|&i| GridMeasure::dirac(grid.clone(), i))
        .collect::<Result<Vec<_>>>()?];
    for q in 0..n {
        let next = basis[q]
            .iter()
            .map(|nu| partition.flow(nu, q, q + 1))
            .collect::<Result<Vec<_>>>()?;
        basis.push(next);
    }
    let points = lattice.points();
    let mut hamilton = vec![Vec::new(); n];
    let mut costs = vec![Vec::new(); n];
    let mut values = vec![Vec::new(); n + 1];
    let mut plans = vec![Vec::new(); n + 1];
    values[n] = vec![0.0; points.len()];
    plans[n] = (0..points.len()).map(LatticePlan::singleton).collect();
    for q in (0..n).rev() {
        let t = partition.time(q);
        let mats: Vec<Vec<Vec<f64>>> = basis[q].iter().map(|nu| payoff_matrix(spec, t, nu)).collect();
        let h: Vec<f64> = points
            .par_iter()
            .map(|p| {
                let mut a = vec![vec![0.0; spec.n_v()]; spec.n_u()];
                for (mat, &c) in mats.iter().zip(p) {
                    for (row, mrow) in a.iter_mut().zip(mat) {
                        for (e, x) in row.iter_mut().zip(mrow) {
                            *e += c * x;
                        }
                    }
                }
                matrix_game_value(&a).map(|s| s.value)
            })
            .collect::<Result<_>>()?;
        let dt = partition.step(q);
        let g: Vec<f64> = h.iter().zip(&values[q + 1]).map(|(h, v)| dt * h + v).collect();
        let solved: Vec<(f64, LatticePlan)> = points
            .par_iter()
            .map(|p| vex_on_lattice(points, &g, p))
            .collect::<Result<_>>()?;
        let (v, pl): (Vec<f64>, Vec<LatticePlan>) = solved.into_iter().unzip();
        hamilton[q] = h;
        costs[q] = g;
        values[q] = v;
        plans[q] = pl;
    }
    let cells = lattice.cell_weights();
    Ok(ValueTable {
        partition: partition.clone(),
        lattice: lattice.clone(),
        basis,
        cells,
        hamilton,
        costs,
        values,
        plans,
    })
}

impl ValueTable {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn lattice(&self) -> &BeliefLattice {
        &self.lattice
    }

    /// `V_q` at every lattice point.
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q]
    }

    pub fn value(&self, q: usize, point: usize) -> f64 {
        self.values[q][point]
    }

    pub fn plan(&self, q: usize, point: usize) -> &LatticePlan {
        &self.plans[q][point]
    }

    pub fn stage_costs(&self, q: usize) -> &[f64] {
        &self.costs[q]
    }

    /// `H(t_q, R_q(p))`.
    pub fn hamiltonian_at(&self, q: usize, point: usize) -> f64 {
        self.hamilton[q][point]
    }

    /// `U₀` from `t_q` at every lattice point.
    pub fn non_revealing(&self, q: usize) -> Vec<f64> {
        let n = self.partition.n_steps();
        (0..self.lattice.len())
            .map(|p| (q..n).map(|k| self.partition.step(k) * self.hamilton[k][p]).sum())
            .collect()
    }

    /// `ν_{q,j}`.
    pub fn basis(&self, q: usize) -> &[GridMeasure] {
        &self.basis[q]
    }

    /// `R_q(coords)`.
    pub fn measure(&self, q: usize, coords: &[f64]) -> GridMeasure {
        combine(&self.basis[q], coords)
    }

    pub fn point_measure(&self, q: usize, point: usize) -> GridMeasure {
        self.measure(q, self.lattice.point(point))
    }

    /// Coordinates `c` with `R_q(c)` carrying the same Voronoi cell masses as `m`.
    pub fn coordinates(&self, q: usize, m: &GridMeasure) -> Result<Vec<f64>> {
        if !m.same_grid(&self.basis[q][0]) {
            return Err(Error::GridMismatch);
        }
        let s = self.lattice.dim();
        let mut a: Vec<Vec<f64>> = vec![vec![0.0; s + 1]; s];
        for (j, nu) in self.basis[q].iter().enumerate() {
            for (i, c) in self.lattice.cell_masses(&self.cells, nu).into_iter().enumerate() {
                a[i][j] = c;
            }
        }
        for (i, c) in self.lattice.cell_masses(&self.cells, m).into_iter().enumerate() {
            a[i][s] = c;
        }
        for col in 0..s {
            let piv = (col..s)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .expect("nonempty");
            if a[piv][col].abs() < PIVOT_MIN {
                return Err(Error::ProjectionFailure(format!(
                    "support cells cannot separate the flowed basis at stage {q}"
                )));
            }
            a.swap(col, piv);
            for row in 0..s {
                if row != col {
                    let f = a[row][col] / a[col][col];
                    for k in col..=s {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
        let mut c: Vec<f64> = (0..s).map(|i| (a[i][s] / a[i][i]).max(0.0)).collect();
        let total: f64 = c.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ProjectionFailure("measure has no mass near the support".into()));
        }
        c.iter_mut().for_each(|x| *x /= total);
        Ok(c)
    }

    /// `V_q` at arbitrary coordinates.
    pub fn value_at(&self, q: usize, coords: &[f64]) -> Result<f64> {
        Ok(self.plan_at(q, coords)?.0)
    }

    /// Optimal lattice splitting at stage `q` of the predicted belief with the given coordinates.
    pub fn plan_at(&self, q: usize, coords: &[f64]) -> Result<(f64, LatticePlan)> {
        let coords = self.lattice.check_coords(coords)?;
        if q >= self.partition.n_steps() {
            return Ok((0.0, LatticePlan::singleton(self.lattice.find(&coords).unwrap_or(0))));
        }
        if let Some(id) = self.lattice.find(&coords) {
            return Ok((self.values[q][id], self.plans[q][id].clone()));
        }
        vex_on_lattice(self.lattice.points(), &self.costs[q], &coords)
    }

    /// `V(t_0, m)` through the coordinates of `m`.
    pub fn value_of_measure(&self, m: &GridMeasure) -> Result<f64> {
        self.value_at(0, &self.coordinates(0, m)?)
    }

    pub fn splitting_plan(&self, q: usize, coords: &[f64]) -> Result<SplittingPlan> {
        let (_, plan) = self.plan_at(q, coords)?;
        let posteriors = plan.atoms.iter().map(|&a| self.point_measure(q, a)).collect();
        SplittingPlan::new(plan.weights.clone(), posteriors, None)
    }

    /// Belief tree generated by the optimal plans from `R_0(coords)`; at most `budget` nodes.
    pub fn splitting_tree(&self, coords: &[f64], budget: usize) -> Result<MartingaleTree> {
        let coords = self.lattice.check_coords(coords)?;
        let n = self.partition.n_steps();
        let mut tree = MartingaleTree::new(self.partition.clone(), self.measure(0, &coords))?;
        // (node id, stage of its children, plan)
        let mut queue = VecDeque::from([(0usize, 0usize, self.plan_at(0, &coords)?.1)]);
        while let Some((parent, q, plan)) = queue.pop_front() {
            for (&a, &w) in plan.atoms.iter().zip(&plan.weights) {
                if tree.len() >= budget {
                    return Err(Error::BudgetExceeded {
                        needed: tree.len() + 1,
                        cap: budget,
                    });
                }
                let id = tree.add_child(parent, w, self.point_measure(q, a))?;
                if q + 1 < n {
                    queue.push_back((id, q + 1, self.plans[q + 1][a].clone()));
                }
            }
        }
        Ok(tree)
    }

    /// Lattice point ids of every stage-`q` node of [`ValueTable::splitting_tree`] are recoverable
    /// through this lookup on the node belief.
    pub fn point_of(&self, q: usize, m: &GridMeasure) -> Option<usize> {
        let coords = self.coordinates(q, m).ok()?;
        self.lattice.find(&coords)
    }

    /// `time_index,lattice_point_id,value`.
    pub fn write_values_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_index", "lattice_point_id", "value"])?;
        for (q, row) in self.values.iter().enumerate() {
            for (p, v) in row.iter().enumerate() {
                out.write_record([q.to_string(), p.to_string(), format_f64(*v)])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `time_index,lattice_point_id,nonrevealing`.
    pub fn write_baseline_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time_index", "lattice_point_id", "nonrevealing"])?;
        for q in 0..=self.partition.n_steps() {
            for (p, v) in self.non_revealing(q).into_iter().enumerate() {
                out.write_record([q.to_string(), p.to_string(), format_f64(v)])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `time_index,point_id,atom_id,weight,posterior_coords...`.
    pub fn write_plans_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["time_index", "point_id", "atom_id", "weight"].map(String::from).to_vec();
        header.extend((0..self.lattice.dim()).map(|j| format!("posterior_coord_{j}")));
        out.write_record(&header)?;
        for q in 0..self.partition.n_steps() {
            for (p, plan) in self.plans[q].iter().enumerate() {
                for (&a, &wt) in plan.atoms.iter().zip(&plan.weights) {
                    let mut rec = vec![q.to_string(), p.to_string(), a.to_string(), format_f64(wt)];
                    rec.extend(self.lattice.point(a).iter().map(|c| format_f64(*c)));
                    out.write_record(&rec)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Fixed 12-digit scientific notation, stable across runs and platforms.
pub fn format_f64(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.12e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub value: f64,
    pub non_revealing: f64,
    /// `V_N − V_{N_prev}`; `None` on the first row.
    pub difference: Option<f64>,
}

/// `V_π` at `R_0(coords)` for uniform partitions of `[start, end]`.
pub fn convergence_study(
    spec: &PayoffSpec,
    lattice: &BeliefLattice,
    start: f64,
    end: f64,
    coords: &[f64],
    n_list: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("step counts must increase".into()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let partition = Partition::uniform(start, end, n)?;
        let table = solve_value(spec, &partition, lattice)?;
        let value = table.value_at(0, coords)?;
        let non_revealing = non_revealing_value(spec, &table.measure(0, coords), &partition)?;
        let difference = rows.last().map(|r| value - r.value);
        rows.push(ConvergenceRow {
            n_steps: n,
            value,
            non_revealing,
            difference,
        });
    }
    Ok(rows)
}

/// `n_steps,value,nonrevealing,difference`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_steps", "value", "nonrevealing", "difference"])?;
    for r in rows {
        out.write_record([
            r.n_steps.to_string(),
            format_f64(r.value),
            format_f64(r.non_revealing),
            r.difference.map_or(String::new(), format_f64),
        ])?;
    }
    out.flush()?;
    Ok(())
}
