//! The discrete game on a partition: informed strategies in splitting-tree form,
//! uninformed policies, and exact or sampled payoff evaluation.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian_value, payoff_matrix};
use crate::martingale::{sample_index, MartingaleTree, SplittingPlan};
use crate::measure::{heat_kernel, wasserstein1, GridMeasure, TransitionKernel};
use crate::partition::Partition;
use crate::payoff::PayoffSpec;
use crate::value::{format_f64, ValueTable};

pub const DEFAULT_BUDGET: usize = 1_000_000;

/// Informed player: follows a belief tree by Bayes sampling and plays the optimal row mix at the node belief.
#[derive(Debug, Clone)]
pub struct InformedStrategy {
    tree: Arc<MartingaleTree>,
    spec: PayoffSpec,
    /// Row mix at every non-root node.
    selectors: Vec<Vec<f64>>,
    /// `H(t_q, b_c)` at every non-root node.
    values: Vec<f64>,
    /// Heat prediction of every node belief to the next partition time (root: the prior).
    predictions: Vec<Option<GridMeasure>>,
}

impl InformedStrategy {
    pub fn from_tree(tree: MartingaleTree, spec: &PayoffSpec) -> Result<Self> {
        let report = tree.validate()?;
        if let Some(v) = report.violation {
            return Err(Error::InvalidTree {
                node: v.node,
                reason: format!("{:?} residual {:e}", v.kind, v.residual),
            });
        }
        let p = tree.partition().clone();
        let mut selectors = vec![Vec::new(); tree.len()];
        let mut values = vec![0.0; tree.len()];
        let mut predictions = vec![None; tree.len()];
        for (id, node) in tree.nodes().iter().enumerate() {
            match node.stage {
                None => predictions[id] = Some(node.belief.clone()),
                Some(q) => {
                    let sol = hamiltonian_value(spec, p.time(q), &node.belief)?;
                    selectors[id] = sol.row;
                    values[id] = sol.value;
                    if q + 1 < p.n_steps() {
                        predictions[id] = Some(p.flow(&node.belief, q, q + 1)?);
                    }
                }
            }
        }
        Ok(Self {
            tree: Arc::new(tree),
            spec: spec.clone(),
            selectors,
            values,
            predictions,
        })
    }

    /// σ* from the optimal splitting plans of a solved table, started at `R_0(coords)`.
    pub fn optimal(table: &ValueTable, spec: &PayoffSpec, coords: &[f64], budget: usize) -> Result<Self> {
        Self::from_tree(table.splitting_tree(coords, budget)?, spec)
    }

    /// Never reveals: beliefs follow the heat flow of `m`.
    pub fn non_revealing(partition: &Partition, m: &GridMeasure, spec: &PayoffSpec) -> Result<Self> {
        Self::from_tree(MartingaleTree::no_split(partition.clone(), m.clone())?, spec)
    }

    /// Reveals the state completely at the first stage, then stops splitting.
    pub fn full_revealing(partition: &Partition, m: &GridMeasure, spec: &PayoffSpec) -> Result<Self> {
        let tree = MartingaleTree::build(partition.clone(), m.clone(), |q, pred| {
            if q > 0 {
                return Ok(SplittingPlan::singleton(pred.clone()));
            }
            let support = pred.support();
            let weights = support.iter().map(|&i| pred.weight(i)).collect();
            let posteriors = support
                .iter()
                .map(|&i| GridMeasure::dirac(pred.grid().clone(), i))
                .collect::<Result<Vec<_>>>()?;
            SplittingPlan::new(weights, posteriors, Some(pred))
        })?;
        Self::from_tree(tree, spec)
    }

    pub fn tree(&self) -> &MartingaleTree {
        &self.tree
    }

    pub fn spec(&self) -> &PayoffSpec {
        &self.spec
    }

    pub fn partition(&self) -> &Partition {
        self.tree.partition()
    }

    /// Row mix `u*` played at a node.
    pub fn selector(&self, node: usize) -> &[f64] {
        &self.selectors[node]
    }

    /// `E[Σ_q Δ_q H(t_q, M_{t_q})]` over the strategy's tree.
    pub fn tree_cost(&self) -> f64 {
        let probs = self.tree.path_probabilities();
        let p = self.partition();
        (1..self.tree.len())
            .map(|id| probs[id] * p.step(self.tree.node(id).stage.expect("non-root")) * self.values[id])
            .sum()
    }

    /// Joint probabilities `P(c_q, u_0..u_q)` of the stage-`q` nodes, `q = u_hist.len() - 1`.
    fn joint_nodes(&self, u_hist: &[usize]) -> Vec<(usize, f64)> {
        let mut cur = vec![(0usize, 1.0)];
        for &u in u_hist {
            let mut next = Vec::new();
            for (c, p) in cur {
                for &k in &self.tree.node(c).children {
                    let w = p * self.tree.node(k).prob * self.selectors[k].get(u).copied().unwrap_or(0.0);
                    if w > 0.0 {
                        next.push((k, w));
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Conditional law of the stage-`q` node given `u_0..u_q`.
    pub fn node_posterior(&self, u_hist: &[usize]) -> Result<Vec<(usize, f64)>> {
        let joint = self.joint_nodes(u_hist);
        let total: f64 = joint.iter().map(|(_, p)| p).sum();
        if !(total > 0.0) {
            return Err(Error::ZeroProbability(format!("informed actions {u_hist:?}")));
        }
        Ok(joint.into_iter().map(|(c, p)| (c, p / total)).collect())
    }

    /// `M̂_{t_q}`: law of the state at stage `q = u_hist.len()` given the earlier informed actions.
    pub fn predicted_belief(&self, u_hist: &[usize]) -> Result<GridMeasure> {
        if u_hist.is_empty() {
            return Ok(self.tree.root().clone());
        }
        let post = self.node_posterior(u_hist)?;
        let weights: Vec<f64> = post.iter().map(|(_, p)| *p).collect();
        let measures = post
            .iter()
            .map(|(c, _)| {
                self.predictions[*c]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("no prediction beyond the last stage".into()))
            })
            .collect::<Result<Vec<&GridMeasure>>>()?;
        combine(&weights, &measures)
    }

    /// `M_{t_q}`: law of the state at stage `q = u_hist.len() - 1` given `u_0..u_q`.
    pub fn posterior_belief(&self, u_hist: &[usize]) -> Result<GridMeasure> {
        let post = self.node_posterior(u_hist)?;
        let weights: Vec<f64> = post.iter().map(|(_, p)| *p).collect();
        let measures: Vec<&GridMeasure> = post.iter().map(|(c, _)| &self.tree.node(*c).belief).collect();
        combine(&weights, &measures)
    }
}

fn combine(weights: &[f64], measures: &[&GridMeasure]) -> Result<GridMeasure> {
    let grid = measures[0].grid().clone();
    let mut w = vec![0.0; grid.len()];
    for (p, m) in weights.iter().zip(measures) {
        for (o, x) in w.iter_mut().zip(m.weights()) {
            *o += p * x;
        }
    }
    GridMeasure::normalized(grid, w)
}

/// Uninformed player's behavior: a mix over `V` given the public history `(u_k, v_k)_{k<q}`.
pub trait UninformedPolicy: Sync {
    fn mix(&self, q: usize, history: &[(usize, usize)]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct UniformPolicy {
    pub n_v: usize,
}

impl UninformedPolicy for UniformPolicy {
    fn mix(&self, _q: usize, _history: &[(usize, usize)]) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.n_v as f64; self.n_v])
    }
}

/// Pure strategy reacting to the informed actions only: `choices[q][code(u_0..u_{q-1})]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PureTau {
    n_u: usize,
    n_v: usize,
    choices: Vec<Vec<usize>>,
}

impl PureTau {
    pub fn new(n_u: usize, n_v: usize, choices: Vec<Vec<usize>>) -> Result<Self> {
        for (q, row) in choices.iter().enumerate() {
            if row.len() != n_u.pow(q as u32) || row.iter().any(|&v| v >= n_v) {
                return Err(Error::InvalidArgument(format!("bad pure strategy table at stage {q}")));
            }
        }
        Ok(Self { n_u, n_v, choices })
    }

    /// Every pure strategy for `n_steps` stages, in lexicographic order of the flattened table.
    pub fn enumerate(n_u: usize, n_v: usize, n_steps: usize) -> Vec<PureTau> {
        let sizes: Vec<usize> = (0..n_steps).map(|q| n_u.pow(q as u32)).collect();
        let total: usize = sizes.iter().sum();
        let count = n_v.pow(total as u32);
        (0..count)
            .map(|mut code| {
                let mut flat = vec![0; total];
                for slot in flat.iter_mut().rev() {
                    *slot = code % n_v;
                    code /= n_v;
                }
                let mut choices = Vec::with_capacity(n_steps);
                let mut at = 0;
                for s in &sizes {
                    choices.push(flat[at..at + s].to_vec());
                    at += s;
                }
                PureTau { n_u, n_v, choices }
            })
            .collect()
    }

    pub fn choice(&self, q: usize, u_hist: &[usize]) -> usize {
        let code = u_hist.iter().fold(0, |acc, &u| acc * self.n_u + u);
        self.choices[q][code]
    }
}

impl UninformedPolicy for PureTau {
    fn mix(&self, q: usize, history: &[(usize, usize)]) -> Result<Vec<f64>> {
        let u: Vec<usize> = history.iter().map(|h| h.0).collect();
        let mut out = vec![0.0; self.n_v];
        out[self.choice(q, &u)] = 1.0;
        Ok(out)
    }
}

/// τ̄: Bayesian belief `M̂` about the state from the informed actions, then the optimal column mix at `M̂`.
pub struct BestReply<'a> {
    sigma: &'a InformedStrategy,
    cache: Mutex<HashMap<Vec<usize>, Vec<f64>>>,
}

impl<'a> BestReply<'a> {
    pub fn new(sigma: &'a InformedStrategy) -> Self {
        Self {
            sigma,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn belief(&self, u_hist: &[usize]) -> Result<GridMeasure> {
        self.sigma.predicted_belief(u_hist)
    }
}

impl UninformedPolicy for BestReply<'_> {
    fn mix(&self, q: usize, history: &[(usize, usize)]) -> Result<Vec<f64>> {
        let u: Vec<usize> = history.iter().map(|h| h.0).collect();
        if let Some(v) = self.cache.lock().expect("cache lock").get(&u) {
            return Ok(v.clone());
        }
        let belief = self.belief(&u)?;
        let t = self.sigma.partition().time(q);
        let col = hamiltonian_value(self.sigma.spec(), t, &belief)?.col;
        self.cache.lock().expect("cache lock").insert(u, col.clone());
        Ok(col)
    }
}

fn stage_kernels(p: &Partition, m: &GridMeasure) -> Result<Vec<TransitionKernel>> {
    (0..p.n_steps().saturating_sub(1))
        .map(|q| heat_kernel(m.grid().clone(), p.step(q)))
        .collect()
}

fn apply_kernel(k: &TransitionKernel, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for (i, &x) in w.iter().enumerate() {
        if x != 0.0 {
            for (o, r) in out.iter_mut().zip(k.row(i)) {
                *o += x * r;
            }
        }
    }
    out
}

/// Exact `γ_π(σ, τ)` by forward enumeration of (tree node, public history, state) laws.
///
/// `budget` caps the number of live (node, history) pairs at any stage.
pub fn evaluate_exact(sigma: &InformedStrategy, tau: &dyn UninformedPolicy, budget: usize) -> Result<f64> {
    let tree = sigma.tree();
    let p = tree.partition();
    let spec = sigma.spec();
    let grid = tree.grid().clone();
    let kernels = stage_kernels(p, tree.root())?;
    // Stage 0 states from the prior split by Bayes at x_0.
    let mut states: BTreeMap<(usize, Vec<(usize, usize)>), Vec<f64>> = BTreeMap::new();
    split_into_children(tree, 0, tree.root().weights(), Vec::new(), &mut states)?;
    let mut total = 0.0;
    for q in 0..p.n_steps() {
        if states.len() > budget {
            return Err(Error::BudgetExceeded {
                needed: states.len(),
                cap: budget,
            });
        }
        let t = p.time(q);
        let dt = p.step(q);
        let mut next: BTreeMap<(usize, Vec<(usize, usize)>), Vec<f64>> = BTreeMap::new();
        for ((node, hist), w) in &states {
            let mass: f64 = w.iter().sum();
            if mass == 0.0 {
                continue;
            }
            let u_mix = sigma.selector(*node);
            let v_mix = tau.mix(q, hist)?;
            let law = GridMeasure::normalized(grid.clone(), w.clone())?;
            let a = payoff_matrix(spec, t, &law);
            for (u, pu) in u_mix.iter().enumerate() {
                for (v, pv) in v_mix.iter().enumerate() {
                    total += dt * mass * pu * pv * a[u][v];
                }
            }
            if q + 1 == p.n_steps() {
                continue;
            }
            let moved = apply_kernel(&kernels[q], w);
            for (u, &pu) in u_mix.iter().enumerate() {
                for (v, &pv) in v_mix.iter().enumerate() {
                    if pu * pv == 0.0 {
                        continue;
                    }
                    let scaled: Vec<f64> = moved.iter().map(|x| x * pu * pv).collect();
                    let mut h = hist.clone();
                    h.push((u, v));
                    split_into_children(tree, *node, &scaled, h, &mut next)?;
                }
            }
        }
        states = next;
    }
    Ok(total)
}

/// Distributes the state law `w` at a parent over its children by Bayes' rule.
fn split_into_children(
    tree: &MartingaleTree,
    parent: usize,
    w: &[f64],
    hist: Vec<(usize, usize)>,
    out: &mut BTreeMap<(usize, Vec<(usize, usize)>), Vec<f64>>,
) -> Result<()> {
    let kids = &tree.node(parent).children;
    let n = w.len();
    let mut denom = vec![0.0; n];
    for &k in kids {
        let node = tree.node(k);
        for (d, b) in denom.iter_mut().zip(node.belief.weights()) {
            *d += node.prob * b;
        }
    }
    if let Some(i) = (0..n).find(|&i| w[i] > 0.0 && denom[i] <= 0.0) {
        return Err(Error::ZeroMass(i));
    }
    for &k in kids {
        let node = tree.node(k);
        let part: Vec<f64> = (0..n)
            .map(|i| if w[i] > 0.0 { w[i] * node.prob * node.belief.weight(i) / denom[i] } else { 0.0 })
            .collect();
        let entry = out.entry((k, hist.clone())).or_insert_with(|| vec![0.0; n]);
        for (e, x) in entry.iter_mut().zip(part) {
            *e += x;
        }
    }
    Ok(())
}

/// One sampled play.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayoutRecord {
    pub sample_id: usize,
    pub states: Vec<f64>,
    pub actions: Vec<(usize, usize)>,
    pub stage_payoffs: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Plays sample `sample_id` on its own random stream.
pub fn playout(sigma: &InformedStrategy, tau: &dyn UninformedPolicy, kernels: &[TransitionKernel], seed: u64, sample_id: usize) -> Result<PlayoutRecord> {
    let tree = sigma.tree();
    let p = tree.partition();
    let spec = sigma.spec();
    let grid = tree.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_id as u64);
    let mut x = sample_index(tree.root().weights(), &mut rng);
    let mut node = 0usize;
    let mut rec = PlayoutRecord {
        sample_id,
        states: Vec::with_capacity(p.n_steps()),
        actions: Vec::with_capacity(p.n_steps()),
        stage_payoffs: Vec::with_capacity(p.n_steps()),
        total: 0.0,
    };
    for q in 0..p.n_steps() {
        if q > 0 {
            x = sample_index(kernels[q - 1].row(x), &mut rng);
        }
        let kids = &tree.node(node).children;
        let atoms: Vec<f64> = kids.iter().map(|&k| tree.node(k).prob * tree.node(k).belief.weight(x)).collect();
        let s: f64 = atoms.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroMass(x));
        }
        let probs: Vec<f64> = atoms.iter().map(|a| a / s).collect();
        node = kids[sample_index(&probs, &mut rng)];
        let u = sample_index(sigma.selector(node), &mut rng);
        let v = sample_index(&tau.mix(q, &rec.actions)?, &mut rng);
        let pay = p.step(q) * spec.eval(p.time(q), grid.node(x), u, v);
        rec.states.push(grid.node(x));
        rec.actions.push((u, v));
        rec.stage_payoffs.push(pay);
        rec.total += pay;
    }
    Ok(rec)
}

/// Sample mean of the total payoff; deterministic for a fixed seed regardless of thread count.
pub fn evaluate_monte_carlo(
    sigma: &InformedStrategy,
    tau: &dyn UninformedPolicy,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let (est, _) = simulate(sigma, tau, n_samples, seed, false)?;
    Ok(est)
}

/// Like [`evaluate_monte_carlo`], optionally keeping every playout.
pub fn simulate(
    sigma: &InformedStrategy,
    tau: &dyn UninformedPolicy,
    n_samples: usize,
    seed: u64,
    keep: bool,
) -> Result<(MonteCarloEstimate, Vec<PlayoutRecord>)> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    let kernels = stage_kernels(sigma.partition(), sigma.tree().root())?;
    let records: Vec<PlayoutRecord> = (0..n_samples)
        .into_par_iter()
        .map(|i| playout(sigma, tau, &kernels, seed, i))
        .collect::<Result<_>>()?;
    let n = n_samples as f64;
    let mean = records.iter().map(|r| r.total).sum::<f64>() / n;
    let var = if n_samples > 1 {
        records.iter().map(|r| (r.total - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let est = MonteCarloEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_samples,
    };
    Ok((est, if keep { records } else { Vec::new() }))
}

/// `sample_id,stage,x,u,v,stage_payoff`.
pub fn write_playouts_csv<W: Write>(records: &[PlayoutRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample_id", "stage", "x", "u", "v", "stage_payoff"])?;
    for r in records {
        for q in 0..r.states.len() {
            out.write_record([
                r.sample_id.to_string(),
                q.to_string(),
                format_f64(r.states[q]),
                r.actions[q].0.to_string(),
                r.actions[q].1.to_string(),
                format_f64(r.stage_payoffs[q]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Both sides of `γ_π(σ, τ̄) ≥ E[Σ Δ (H(t_q, M_q) − 2C d₁(M_q, M̂_q))]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiminfReport {
    pub payoff: f64,
    pub bound: f64,
    /// `E[Σ Δ d₁(M_q, M̂_q)]`.
    pub variation: f64,
}

impl LiminfReport {
    pub fn slack(&self) -> f64 {
        self.payoff - self.bound
    }
}

pub fn liminf_bound_check(sigma: &InformedStrategy, budget: usize) -> Result<LiminfReport> {
    let tau = BestReply::new(sigma);
    let payoff = evaluate_exact(sigma, &tau, budget)?;
    let p = sigma.partition();
    let spec = sigma.spec();
    let c = spec.c();
    let n_u = spec.n_u();
    let mut bound = 0.0;
    let mut variation = 0.0;
    // Live informed-action prefixes with their probabilities.
    let mut prefixes: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for q in 0..p.n_steps() {
        let mut next = Vec::new();
        for (prefix, _) in &prefixes {
            let predicted = sigma.predicted_belief(prefix)?;
            for u in 0..n_u {
                let mut h = prefix.clone();
                h.push(u);
                let prob: f64 = sigma.joint_nodes(&h).iter().map(|(_, w)| w).sum();
                if prob <= 0.0 {
                    continue;
                }
                let post = sigma.posterior_belief(&h)?;
                let d = wasserstein1(&post, &predicted)?;
                let hv = hamiltonian_value(spec, p.time(q), &post)?.value;
                bound += prob * p.step(q) * (hv - 2.0 * c * d);
                variation += prob * p.step(q) * d;
                next.push((h, prob));
            }
        }
        if next.len() > budget {
            return Err(Error::BudgetExceeded {
                needed: next.len(),
                cap: budget,
            });
        }
        prefixes = next;
    }
    Ok(LiminfReport {
        payoff,
        bound,
        variation,
    })
}

/// Largest `E[f(t_q, x, u*, v) | node] − H(t_q, b_node)` over nodes and pure `v`.
pub fn selection_gap(sigma: &InformedStrategy) -> Result<f64> {
    let tree = sigma.tree();
    let p = tree.partition();
    let mut worst = f64::NEG_INFINITY;
    for (id, node) in tree.nodes().iter().enumerate().skip(1) {
        let q = node.stage.expect("non-root");
        let a = payoff_matrix(sigma.spec(), p.time(q), &node.belief);
        let h = sigma.values[id];
        for v in 0..sigma.spec().n_v() {
            let e: f64 = sigma.selector(id).iter().enumerate().map(|(u, pu)| pu * a[u][v]).sum();
            worst = worst.max(e - h);
        }
    }
    Ok(worst)
}
