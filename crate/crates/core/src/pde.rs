//! Finite-difference calculus on grid measures and flow-form checks of the Hamilton-Jacobi equation.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonian::hamiltonian;
use crate::measure::{clamp_pushforward, heat_evolve, heat_kernel, wasserstein1, GridMeasure};
use crate::partition::Partition;
use crate::payoff::PayoffSpec;
use crate::value::{format_f64, ValueTable};

pub const DEFAULT_FLAT_STEP: f64 = 1e-4;

/// Regularity class a functional is declared to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// Bounded and continuous.
    A1,
    /// Continuous with at most linear growth.
    A2,
    /// Lower semicontinuous and `d₂`-continuous.
    A3,
    Unknown,
}

type Eval = Arc<dyn Fn(f64, &GridMeasure) -> Result<f64> + Send + Sync>;

/// `U(t, m)` together with its time domain and declared tier.
#[derive(Clone)]
pub struct MeasureFunctional {
    name: String,
    tier: Tier,
    domain: (f64, f64),
    eval: Eval,
}

impl fmt::Debug for MeasureFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureFunctional")
            .field("name", &self.name)
            .field("tier", &self.tier)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl MeasureFunctional {
    pub fn new(
        name: impl Into<String>,
        tier: Tier,
        eval: impl Fn(f64, &GridMeasure) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            tier,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
            eval: Arc::new(eval),
        }
    }

    pub fn with_domain(mut self, start: f64, end: f64) -> Self {
        self.domain = (start, end);
        self
    }

    /// `∫ φ dm`.
    pub fn linear(name: impl Into<String>, phi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(name, Tier::A2, move |_, m| Ok(m.integrate(&phi)))
    }

    /// `|m|₂² = ∫ x² dm`.
    pub fn second_moment() -> Self {
        Self::new("second-moment", Tier::Unknown, |_, m| Ok(m.second_moment()))
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", Tier::A1, move |_, _| Ok(c))
    }

    /// `a·t`.
    pub fn time_linear(a: f64) -> Self {
        Self::new("time-linear", Tier::A1, move |t, _| Ok(a * t))
    }

    /// `H(t, m)`.
    pub fn hamiltonian(spec: &PayoffSpec) -> Self {
        let spec = spec.clone();
        let (a, b) = spec.horizon();
        Self::new("hamiltonian", Tier::A1, move |t, m| hamiltonian(&spec, t, m)).with_domain(a, b)
    }

    /// `U₀(t, m) = ∫_t^T H(s, p^{t,m}_s) ds` by the midpoint rule with `n_quad` nodes.
    pub fn non_revealing(spec: &PayoffSpec, n_quad: usize) -> Result<Self> {
        let (_, end) = spec.horizon();
        let f = explicit_solution(&Self::hamiltonian(spec), &Self::constant(0.0), end, n_quad)?;
        Ok(f.renamed("non-revealing"))
    }

    /// The solver's value: coordinates at the enclosing partition times, linear in time between them.
    pub fn interpolated_value(table: Arc<ValueTable>) -> Self {
        let p = table.partition().clone();
        let (a, b) = (p.start(), p.end());
        Self::new("value", Tier::A1, move |t, m| {
            if t < a - 1e-12 || t > b + 1e-12 {
                return Err(Error::OutsideHorizon { t, start: a, end: b });
            }
            let q = p.stage_of(t.clamp(a, b));
            let (t0, t1) = (p.time(q), p.time(q + 1));
            let theta = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let lo = table.value_at(q, &table.coordinates(q, m)?)?;
            if theta == 0.0 {
                return Ok(lo);
            }
            let hi = table.value_at(q + 1, &table.coordinates(q + 1, m)?)?;
            Ok((1.0 - theta) * lo + theta * hi)
        })
        .with_domain(a, b)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tier(&self) -> Tier {
        self.tier
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn eval(&self, t: f64, m: &GridMeasure) -> Result<f64> {
        (self.eval)(t, m)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let inner = self.clone();
        Self::new(format!("{}{:+}", self.name, c), self.tier, move |t, m| Ok(inner.eval(t, m)? + c))
            .with_domain(self.domain.0, self.domain.1)
    }
}

fn towards_node(m: &GridMeasure, i: usize, r: f64) -> Result<GridMeasure> {
    let mut w: Vec<f64> = m.weights().iter().map(|x| (1.0 - r) * x).collect();
    w[i] += r;
    GridMeasure::normalized(m.grid().clone(), w)
}

/// Flat derivative at the listed nodes, before recentring.
fn raw_flat(u: &MeasureFunctional, t: f64, m: &GridMeasure, r: f64, base: f64, nodes: &[usize]) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|&i| Ok((u.eval(t, &towards_node(m, i, r)?)? - base) / r))
        .collect()
}

fn check_step(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidArgument(format!("mixture step {r} outside (0, 1)")));
    }
    Ok(())
}

/// `δU/δm(t, m, x_i)` for every node, normalized to integrate to zero against `m`.
pub fn flat_derivative(u: &MeasureFunctional, t: f64, m: &GridMeasure, r: f64) -> Result<Vec<f64>> {
    check_step(r)?;
    let base = u.eval(t, m)?;
    let nodes: Vec<usize> = (0..m.weights().len()).collect();
    let mut g = raw_flat(u, t, m, r, base, &nodes)?;
    let mean: f64 = g.iter().zip(m.weights()).map(|(g, w)| g * w).sum();
    g.iter_mut().for_each(|x| *x -= mean);
    Ok(g)
}

/// Intrinsic derivative and its divergence from a flat derivative by central differences.
pub fn intrinsic_derivative(g: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let mut d = vec![0.0; n];
    let mut div = vec![0.0; n];
    for i in 0..n {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        d[i] = (g[b] - g[a]) / ((b - a) as f64 * h);
        let c = i.clamp(1, n - 2);
        div[i] = (g[c + 1] - 2.0 * g[c] + g[c - 1]) / (h * h);
    }
    (d, div)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub value: f64,
    pub time_derivative: f64,
    pub half_trace: f64,
    /// Set when the time difference had to be one-sided at the edge of the domain.
    pub one_sided: bool,
}

fn time_difference(u: &MeasureFunctional, t: f64, m: &GridMeasure, dt: f64, base: f64) -> Result<(f64, bool)> {
    let (a, b) = u.domain();
    let (lo, hi, one_sided) = if t - dt >= a && t + dt <= b {
        (t - dt, t + dt, false)
    } else if t + dt <= b {
        (t, t + dt, true)
    } else {
        (t - dt, t, true)
    };
    let at = |s: f64| if s == t { Ok(base) } else { u.eval(s, m) };
    Ok(((at(hi)? - at(lo)?) / (hi - lo), one_sided))
}

/// Nodes whose flat derivative enters the half trace: the support and its neighbours.
fn trace_nodes(m: &GridMeasure) -> Vec<usize> {
    let n = m.weights().len();
    let mut nodes: Vec<usize> = m
        .support()
        .iter()
        .flat_map(|&i| {
            let c = i.clamp(1, n - 2);
            [c - 1, c, c + 1, i]
        })
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// `½ Σ_i w_i Δ_h g(x_i)`, with `g` looked up by node.
fn half_trace(m: &GridMeasure, g: impl Fn(usize) -> f64) -> f64 {
    let n = m.weights().len();
    let h = m.grid().spacing();
    m.support()
        .iter()
        .map(|&i| {
            let c = i.clamp(1, n - 2);
            0.5 * m.weight(i) * (g(c + 1) - 2.0 * g(c) + g(c - 1)) / (h * h)
        })
        .sum()
}

fn check_generator_args(u: &MeasureFunctional, t: f64, r: f64, dt: f64) -> Result<()> {
    check_step(r)?;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveElapsed(dt));
    }
    let (a, b) = u.domain();
    if t >= b {
        return Err(Error::OutsideHorizon { t, start: a, end: b });
    }
    Ok(())
}

/// `∂_t U + ½ Σ_i w_i div[D_m U](t, m, x_i)`.
pub fn generator(u: &MeasureFunctional, t: f64, m: &GridMeasure, r: f64, dt: f64) -> Result<GeneratorValue> {
    check_generator_args(u, t, r, dt)?;
    let base = u.eval(t, m)?;
    let (time_derivative, one_sided) = time_difference(u, t, m, dt, base)?;
    let nodes = trace_nodes(m);
    let raw = raw_flat(u, t, m, r, base, &nodes)?;
    let half_trace = half_trace(m, |i| raw[nodes.binary_search(&i).expect("needed node")]);
    Ok(GeneratorValue {
        value: time_derivative + half_trace,
        time_derivative,
        half_trace,
        one_sided,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub flat: Vec<f64>,
    pub intrinsic: Vec<f64>,
    pub divergence: Vec<f64>,
    pub generator: f64,
    pub flow_quotient: f64,
    /// `|flow_quotient − generator|` at `dt`.
    pub residual: f64,
    /// Same at `dt/2`.
    pub residual_half: f64,
    /// Roundoff level of the generator estimate, `16 ε (1 + |U|) / (r h²)`.
    pub noise_floor: f64,
    /// `log₂(residual / residual_half)`; `None` when both residuals sit below the noise floor.
    pub richardson_slope: Option<f64>,
}

fn flow_quotient(u: &MeasureFunctional, t: f64, m: &GridMeasure, dt: f64, base: f64) -> Result<f64> {
    Ok((u.eval(t + dt, &heat_evolve(m, t, t + dt)?)? - base) / dt)
}

/// Compares `[U(t+dt, p^{t,m}_{t+dt}) − U(t,m)]/dt` with the generator at `dt` and `dt/2`.
pub fn flow_derivative_check(u: &MeasureFunctional, t: f64, m: &GridMeasure, r: f64, dt: f64) -> Result<DerivativeReport> {
    let (_, b) = u.domain();
    if t + dt > b + 1e-12 {
        return Err(Error::OutsideHorizon {
            t: t + dt,
            start: u.domain().0,
            end: b,
        });
    }
    check_generator_args(u, t, r, dt)?;
    let base = u.eval(t, m)?;
    let all: Vec<usize> = (0..m.weights().len()).collect();
    let raw = raw_flat(u, t, m, r, base, &all)?;
    let trace = half_trace(m, |i| raw[i]);
    let mean: f64 = raw.iter().zip(m.weights()).map(|(g, w)| g * w).sum();
    let flat: Vec<f64> = raw.iter().map(|g| g - mean).collect();
    let (intrinsic, divergence) = intrinsic_derivative(&flat, m.grid().spacing());
    let gen = time_difference(u, t, m, dt, base)?.0 + trace;
    let gen_half = time_difference(u, t, m, dt / 2.0, base)?.0 + trace;
    let fq = flow_quotient(u, t, m, dt, base)?;
    let fq_half = flow_quotient(u, t, m, dt / 2.0, base)?;
    let residual = (fq - gen).abs();
    let residual_half = (fq_half - gen_half).abs();
    let h = m.grid().spacing();
    let noise_floor = 16.0 * f64::EPSILON * (1.0 + base.abs()) / (r * h * h);
    let richardson_slope = if residual <= noise_floor && residual_half <= noise_floor {
        None
    } else {
        Some((residual / residual_half).log2())
    };
    Ok(DerivativeReport {
        flat,
        intrinsic,
        divergence,
        generator: gen,
        flow_quotient: fq,
        residual,
        residual_half,
        noise_floor,
        richardson_slope,
    })
}

/// `φ(t, m) = ψ(t₁, p^{t,m}_{t₁}) + ∫_t^{t₁} F(s, p^{t,m}_s) ds`, composite midpoint rule with `n_quad` nodes.
pub fn explicit_solution(f: &MeasureFunctional, psi: &MeasureFunctional, t1: f64, n_quad: usize) -> Result<MeasureFunctional> {
    if n_quad == 0 {
        return Err(Error::InvalidArgument("n_quad must be positive".into()));
    }
    let (f, psi) = (f.clone(), psi.clone());
    let start = f.domain().0.max(psi.domain().0);
    Ok(MeasureFunctional::new("explicit-solution", Tier::A2, move |t, m| {
        if t > t1 + 1e-12 {
            return Err(Error::BackwardTime { t, s: t1 });
        }
        let t = t.min(t1);
        let mut total = psi.eval(t1, &heat_evolve(m, t, t1)?)?;
        let ds = (t1 - t) / n_quad as f64;
        if ds > 0.0 {
            for k in 0..n_quad {
                let s = t + (k as f64 + 0.5) * ds;
                total += ds * f.eval(s, &heat_evolve(m, t, s)?)?;
            }
        }
        Ok(total)
    })
    .with_domain(start, t1))
}

/// How `∫_{t₀}^{s} H(r, p^{t₀,m₀}_r) dr` is approximated.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    /// Left-endpoint sum over the partition times in `[t₀, s]` (both must be partition times).
    LeftEndpoint(Partition),
    Midpoint(usize),
}

fn flow_integral(spec: &PayoffSpec, m0: &GridMeasure, t0: f64, s: f64, quad: &Quadrature) -> Result<f64> {
    match quad {
        Quadrature::Midpoint(n) => {
            let ds = (s - t0) / *n as f64;
            let mut total = 0.0;
            for k in 0..*n {
                let r = t0 + (k as f64 + 0.5) * ds;
                total += ds * hamiltonian(spec, r, &heat_evolve(m0, t0, r)?)?;
            }
            Ok(total)
        }
        Quadrature::LeftEndpoint(p) => {
            let (a, b) = match (p.index_of(t0), p.index_of(s)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::InvalidArgument("left-endpoint rule needs partition times".into())),
            };
            let mut cur = m0.clone();
            let mut total = 0.0;
            for q in a..b {
                if q > a {
                    cur = heat_evolve(&cur, p.time(q - 1), p.time(q))?;
                }
                total += p.step(q) * hamiltonian(spec, p.time(q), &cur)?;
            }
            Ok(total)
        }
    }
}

/// One row of `check_name,t,point_id,lhs,rhs,slack`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub check_name: String,
    pub t: f64,
    pub point_id: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub tolerance: f64,
    pub records: Vec<CheckRecord>,
    /// Set when a precondition failed and the check was not run.
    pub skipped: Option<String>,
}

impl CheckReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            tolerance,
            records: Vec::new(),
            skipped: None,
        }
    }

    pub fn push(&mut self, t: f64, point_id: usize, lhs: f64, rhs: f64, slack: f64) {
        self.records.push(CheckRecord {
            check_name: self.name.clone(),
            t,
            point_id,
            lhs,
            rhs,
            slack,
        });
    }

    pub fn worst(&self) -> Option<&CheckRecord> {
        self.records.iter().min_by(|a, b| a.slack.total_cmp(&b.slack))
    }

    pub fn worst_slack(&self) -> f64 {
        self.worst().map_or(f64::INFINITY, |r| r.slack)
    }

    pub fn passed(&self) -> bool {
        self.skipped.is_none() && self.worst_slack() >= -self.tolerance
    }
}

/// Writes the records of several reports under one header.
pub fn write_report_csv<W: Write>(reports: &[CheckReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["check_name", "t", "point_id", "lhs", "rhs", "slack"])?;
    for rep in reports {
        for r in &rep.records {
            out.write_record([
                r.check_name.clone(),
                format_f64(r.t),
                r.point_id.to_string(),
                format_f64(r.lhs),
                format_f64(r.rhs),
                format_f64(r.slack),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Sample for the flow-form subsolution inequality: start time, start law, end time.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub t0: f64,
    pub m0: GridMeasure,
    pub s: f64,
}

/// `U(s, p^{t₀,m₀}_s) − U(t₀, m₀) + ∫_{t₀}^s H(r, p^{t₀,m₀}_r) dr ≥ −tol` on every sample.
pub fn subsolution_flow_check(
    u: &MeasureFunctional,
    spec: &PayoffSpec,
    samples: &[FlowSample],
    quad: &Quadrature,
    tol: f64,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("subsolution", tol);
    for (id, smp) in samples.iter().enumerate() {
        if smp.s < smp.t0 {
            return Err(Error::BackwardTime { t: smp.t0, s: smp.s });
        }
        let start = u.eval(smp.t0, &smp.m0)?;
        let end = u.eval(smp.s, &heat_evolve(&smp.m0, smp.t0, smp.s)?)?;
        let integral = flow_integral(spec, &smp.m0, smp.t0, smp.s, quad)?;
        rep.push(smp.t0, id, end + integral, start, end - start + integral);
    }
    Ok(rep)
}

/// `U(t, m) ≤ φ(t, m) + tol` with `φ` the explicit solution, after checking `U(t₁, ·) ≤ ψ` on the samples.
pub fn comparison_check(
    u: &MeasureFunctional,
    f: &MeasureFunctional,
    psi: &MeasureFunctional,
    t1: f64,
    samples: &[(f64, GridMeasure)],
    n_quad: usize,
    tol: f64,
) -> Result<CheckReport> {
    let mut rep = CheckReport::new("comparison", tol);
    for (_, m) in samples {
        let (a, b) = (u.eval(t1, m)?, psi.eval(t1, m)?);
        if a > b + tol {
            rep.skipped = Some(format!("terminal condition fails: U = {a} > psi = {b}"));
            return Ok(rep);
        }
    }
    let phi = explicit_solution(f, psi, t1, n_quad)?;
    for (id, (t, m)) in samples.iter().enumerate() {
        let (lhs, rhs) = (u.eval(*t, m)?, phi.eval(*t, m)?);
        rep.push(*t, id, lhs, rhs, rhs - lhs);
    }
    Ok(rep)
}

/// `ψ_δ(m) = ∫ √(δ e^{−x²} + x² (ρ_δ∗m − ρ_δ∗m₁)²) dx − √(2πδ)` on the grid, densities taken as weights over `h`.
pub fn psi_delta(m: &GridMeasure, m1: &GridMeasure, delta: f64) -> Result<f64> {
    let (dm, dm1, _) = smoothed_pair(m, m1, delta)?;
    let grid = m.grid();
    let h = grid.spacing();
    let total: f64 = (0..grid.len())
        .map(|i| {
            let x = grid.node(i);
            let d = dm[i] - dm1[i];
            (delta * (-x * x).exp() + x * x * d * d).sqrt()
        })
        .sum::<f64>()
        * h;
    Ok(total - (2.0 * std::f64::consts::PI * delta).sqrt())
}

/// Densities of `ρ_δ∗m`, `ρ_δ∗m₁` at the nodes, and the kernel used.
fn smoothed_pair(m: &GridMeasure, m1: &GridMeasure, delta: f64) -> Result<(Vec<f64>, Vec<f64>, crate::measure::TransitionKernel)> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if !m.same_grid(m1) {
        return Err(Error::GridMismatch);
    }
    let k = heat_kernel(m.grid().clone(), delta)?;
    let h = m.grid().spacing();
    let dm: Vec<f64> = k.apply(m)?.weights().iter().map(|w| w / h).collect();
    let dm1: Vec<f64> = k.apply(m1)?.weights().iter().map(|w| w / h).collect();
    Ok((dm, dm1, k))
}

/// `δψ_δ/δm(m, y)` from the integral formula, recentred against `m`.
pub fn psi_delta_flat_derivative(m: &GridMeasure, m1: &GridMeasure, delta: f64) -> Result<Vec<f64>> {
    let (dm, dm1, k) = smoothed_pair(m, m1, delta)?;
    let grid = m.grid();
    let h = grid.spacing();
    let n = grid.len();
    let factor: Vec<f64> = (0..n)
        .map(|i| {
            let x = grid.node(i);
            let d = dm[i] - dm1[i];
            x * x * d / (delta * (-x * x).exp() + x * x * d * d).sqrt()
        })
        .collect();
    // ρ_δ(x_i − y_j) ≈ K(j, i) / h.
    let mut g: Vec<f64> = (0..n)
        .map(|j| k.row(j).iter().zip(&factor).map(|(kji, f)| f * kji / h).sum::<f64>() * h)
        .collect();
    let mean: f64 = g.iter().zip(m.weights()).map(|(g, w)| g * w).sum();
    g.iter_mut().for_each(|x| *x -= mean);
    Ok(g)
}

/// Smallest `ψ_δ` over the candidates at `d₁`-distance at least `nu` from `m₁`; `None` if there are none.
pub fn psi_delta_separation(m1: &GridMeasure, delta: f64, nu: f64, candidates: &[GridMeasure]) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for m in candidates {
        if wasserstein1(m, m1)? >= nu {
            let v = psi_delta(m, m1, delta)?;
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    Ok(best)
}

/// `H̃(t, m) = H(t, φ_R # m)`.
pub fn truncated_hamiltonian(spec: &PayoffSpec, radius: f64) -> Result<MeasureFunctional> {
    if !(radius > 0.0) {
        return Err(Error::InvalidRadius(radius));
    }
    let spec = spec.clone();
    let (a, b) = spec.horizon();
    Ok(MeasureFunctional::new("truncated-hamiltonian", Tier::A1, move |t, m| {
        hamiltonian(&spec, t, &clamp_pushforward(m, radius)?)
    })
    .with_domain(a, b))
}

/// `|H − H̃| ≤ (2C/R)|m|₂² + tol` and `|H − H̃| ≤ C d₁(m, φ_R # m) + tol` on the samples.
pub fn truncation_check(spec: &PayoffSpec, radius: f64, samples: &[(f64, GridMeasure)], tol: f64) -> Result<CheckReport> {
    let tilde = truncated_hamiltonian(spec, radius)?;
    let mut rep = CheckReport::new("truncation", tol);
    for (id, (t, m)) in samples.iter().enumerate() {
        let gap = (hamiltonian(spec, *t, m)? - tilde.eval(*t, m)?).abs();
        let moment = 2.0 * spec.c() / radius * m.second_moment();
        let transport = spec.c() * wasserstein1(m, &clamp_pushforward(m, radius)?)?;
        rep.push(*t, id, gap, moment, moment - gap);
        rep.records.push(CheckRecord {
            check_name: "truncation-transport".into(),
            t: *t,
            point_id: id,
            lhs: gap,
            rhs: transport,
            slack: transport - gap,
        });
    }
    Ok(rep)
}
