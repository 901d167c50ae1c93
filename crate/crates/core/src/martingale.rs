//! Finite measure-valued martingales that jump at partition times and follow
//! the heat flow in between.

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::hamiltonian;
use crate::measure::{heat_evolve, wasserstein1, GridMeasure, SpatialGrid};
use crate::partition::Partition;
use crate::payoff::PayoffSpec;

pub const TREE_TOL: f64 = 1e-9;

/// Splitting of a prior into posteriors with the given weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingPlan {
    weights: Vec<f64>,
    posteriors: Vec<GridMeasure>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn barycenter(weights: &[f64], measures: &[&GridMeasure]) -> Vec<f64> {
    let n = measures.first().map_or(0, |m| m.weights().len());
    let mut out = vec![0.0; n];
    for (w, m) in weights.iter().zip(measures) {
        for (o, x) in out.iter_mut().zip(m.weights()) {
            *o += w * x;
        }
    }
    out
}

impl SplittingPlan {
    /// Checks `Σλ = 1` within 1e-12 and, if a prior is given, the barycenter within 1e-9.
    pub fn new(weights: Vec<f64>, posteriors: Vec<GridMeasure>, prior: Option<&GridMeasure>) -> Result<Self> {
        if weights.is_empty() || weights.len() != posteriors.len() {
            return Err(Error::InvalidArgument("plan needs one weight per posterior".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("plan weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("plan weights sum to {total}")));
        }
        if posteriors.iter().any(|p| !p.same_grid(&posteriors[0])) {
            return Err(Error::GridMismatch);
        }
        let plan = Self { weights, posteriors };
        if let Some(prior) = prior {
            if !prior.same_grid(&plan.posteriors[0]) {
                return Err(Error::GridMismatch);
            }
            let r = max_abs_diff(&plan.barycenter(), prior.weights());
            if r > TREE_TOL {
                return Err(Error::InvalidArgument(format!("barycenter off the prior by {r:e}")));
            }
        }
        Ok(plan)
    }

    pub fn singleton(m: GridMeasure) -> Self {
        Self {
            weights: vec![1.0],
            posteriors: vec![m],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn posteriors(&self) -> &[GridMeasure] {
        &self.posteriors
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn barycenter(&self) -> Vec<f64> {
        let refs: Vec<&GridMeasure> = self.posteriors.iter().collect();
        barycenter(&self.weights, &refs)
    }

    /// `P(atom k | state at node x)`.
    pub fn posterior_probabilities(&self, x: usize) -> Result<Vec<f64>> {
        atom_probabilities(self.weights.iter().copied().zip(self.posteriors.iter()), x)
    }
}

fn atom_probabilities<'a>(atoms: impl Iterator<Item = (f64, &'a GridMeasure)>, x: usize) -> Result<Vec<f64>> {
    let joint: Vec<f64> = atoms.map(|(w, m)| w * m.weight(x)).collect();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass(x));
    }
    Ok(joint.into_iter().map(|j| j / total).collect())
}

/// Draws an atom with probability `λ_k m_k(x) / Σ_j λ_j m_j(x)`.
pub fn bayes_posterior_sample(plan: &SplittingPlan, x: usize, rng: &mut impl Rng) -> Result<usize> {
    let probs = plan.posterior_probabilities(x)?;
    Ok(sample_index(&probs, rng))
}

pub(crate) fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    /// `None` for the root (the prior before the first split).
    pub stage: Option<usize>,
    /// Transition probability from the parent.
    pub prob: f64,
    pub belief: GridMeasure,
    pub children: Vec<usize>,
}

/// Tree of beliefs: the root holds the prior, a node at stage `q` holds `M_{t_q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTree {
    partition: Partition,
    nodes: Vec<TreeNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Structure,
    Probabilities,
    RootBarycenter,
    HeatMartingale,
    MeanMeasure,
    SecondMoment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeViolation {
    pub node: usize,
    pub path: Vec<usize>,
    pub kind: ViolationKind,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeReport {
    pub nodes_checked: usize,
    /// Largest residual seen for conditions (i) and (ii).
    pub max_residual: f64,
    pub violation: Option<TreeViolation>,
}

impl TreeReport {
    pub fn is_valid(&self) -> bool {
        self.violation.is_none()
    }
}

impl MartingaleTree {
    pub fn new(partition: Partition, root: GridMeasure) -> Result<Self> {
        if partition.n_steps() == 0 {
            return Err(Error::InvalidPartition("trees need at least one stage".into()));
        }
        Ok(Self {
            partition,
            nodes: vec![TreeNode {
                parent: None,
                stage: None,
                prob: 1.0,
                belief: root,
                children: Vec::new(),
            }],
        })
    }

    pub fn add_child(&mut self, parent: usize, prob: f64, belief: GridMeasure) -> Result<usize> {
        let stage = match self.nodes.get(parent) {
            None => return Err(Error::InvalidArgument(format!("no node {parent}"))),
            Some(p) => p.stage.map_or(0, |s| s + 1),
        };
        if stage >= self.partition.n_steps() {
            return Err(Error::InvalidTree {
                node: parent,
                reason: "children beyond the last stage".into(),
            });
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            parent: Some(parent),
            stage: Some(stage),
            prob,
            belief,
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Tree that never splits: `M_{t_q}` is the heat flow of `m`.
    pub fn no_split(partition: Partition, m: GridMeasure) -> Result<Self> {
        Self::build(partition, m, |_, predicted| Ok(SplittingPlan::singleton(predicted.clone())))
    }

    /// Grows a full tree: `split(q, predicted)` splits the predicted belief at stage `q`
    /// (the prior for `q = 0`, the heat-evolved parent belief afterwards).
    pub fn build(
        partition: Partition,
        m: GridMeasure,
        mut split: impl FnMut(usize, &GridMeasure) -> Result<SplittingPlan>,
    ) -> Result<Self> {
        let mut tree = Self::new(partition, m)?;
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            let node = &tree.nodes[id];
            let stage = node.stage.map_or(0, |s| s + 1);
            if stage >= tree.partition.n_steps() {
                continue;
            }
            let predicted = match node.stage {
                None => node.belief.clone(),
                Some(s) => heat_evolve(&node.belief, tree.partition.time(s), tree.partition.time(s + 1))?,
            };
            let plan = split(stage, &predicted)?;
            for (w, post) in plan.weights.iter().zip(plan.posteriors) {
                if *w > 0.0 {
                    queue.push_back(tree.add_child(id, *w, post)?);
                }
            }
        }
        Ok(tree)
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &GridMeasure {
        &self.nodes[0].belief
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        self.root().grid()
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: usize) -> Vec<usize> {
        let mut p = vec![id];
        let mut cur = id;
        while let Some(par) = self.nodes[cur].parent {
            p.push(par);
            cur = par;
        }
        p.reverse();
        p
    }

    /// Probability of reaching each node.
    pub fn path_probabilities(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        out[0] = 1.0;
        for id in 1..self.nodes.len() {
            let n = &self.nodes[id];
            out[id] = out[n.parent.expect("non-root")] * n.prob;
        }
        out
    }

    pub fn nodes_at(&self, stage: usize) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].stage == Some(stage)).collect()
    }

    /// Ancestor of `id` at a given stage (the node itself if it is at that stage).
    pub fn ancestor_at(&self, id: usize, stage: usize) -> Option<usize> {
        let mut cur = id;
        loop {
            let n = &self.nodes[cur];
            match n.stage {
                Some(s) if s == stage => return Some(cur),
                Some(s) if s < stage => return None,
                None => return None,
                _ => cur = n.parent?,
            }
        }
    }

    /// Belief the uninformed side predicts for stage `q` at `id`: the prior for the
    /// root's children, the heat-evolved parent belief otherwise.
    pub fn predicted(&self, id: usize) -> Result<GridMeasure> {
        let n = &self.nodes[id];
        let parent = &self.nodes[n.parent.ok_or_else(|| Error::InvalidArgument("root has no prediction".into()))?];
        match parent.stage {
            None => Ok(parent.belief.clone()),
            Some(s) => heat_evolve(&parent.belief, self.partition.time(s), self.partition.time(s + 1)),
        }
    }

    fn violation(&self, node: usize, kind: ViolationKind, residual: f64) -> TreeReport {
        TreeReport {
            nodes_checked: node + 1,
            max_residual: residual,
            violation: Some(TreeViolation {
                node,
                path: self.path(node),
                kind,
                residual,
            }),
        }
    }

    /// Checks conditions (i) and (ii), the mean-measure identity and the second-moment submartingale.
    pub fn validate(&self) -> Result<TreeReport> {
        let last = self.partition.n_steps() - 1;
        let mut max_residual = 0.0f64;
        for (id, node) in self.nodes.iter().enumerate() {
            if !node.belief.same_grid(self.root()) {
                return Ok(self.violation(id, ViolationKind::Structure, f64::INFINITY));
            }
            let complete = node.stage == Some(last);
            if complete != node.children.is_empty() {
                return Ok(self.violation(id, ViolationKind::Structure, f64::INFINITY));
            }
            if node.children.is_empty() {
                continue;
            }
            let probs: Vec<f64> = node.children.iter().map(|&c| self.nodes[c].prob).collect();
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > TREE_TOL {
                return Ok(self.violation(id, ViolationKind::Probabilities, (total - 1.0).abs()));
            }
            let target = match node.stage {
                None => node.belief.clone(),
                Some(s) => heat_evolve(&node.belief, self.partition.time(s), self.partition.time(s + 1))?,
            };
            let kids: Vec<&GridMeasure> = node.children.iter().map(|&c| &self.nodes[c].belief).collect();
            let r = max_abs_diff(&barycenter(&probs, &kids), target.weights());
            max_residual = max_residual.max(r);
            if r > TREE_TOL {
                let kind = if node.stage.is_none() {
                    ViolationKind::RootBarycenter
                } else {
                    ViolationKind::HeatMartingale
                };
                // Name the child farthest from the target when a single child carries the imbalance.
                return Ok(self.violation(self.worst_child(id), kind, r));
            }
            let after: f64 = probs.iter().zip(&kids).map(|(p, k)| p * k.second_moment()).sum();
            let gap = node.belief.second_moment() - after;
            if gap > TREE_TOL {
                return Ok(self.violation(id, ViolationKind::SecondMoment, gap));
            }
        }
        let probs = self.path_probabilities();
        let mut flow = self.root().clone();
        for q in 0..=last {
            if q > 0 {
                flow = heat_evolve(&flow, self.partition.time(q - 1), self.partition.time(q))?;
            }
            let ids = self.nodes_at(q);
            let w: Vec<f64> = ids.iter().map(|&i| probs[i]).collect();
            let bs: Vec<&GridMeasure> = ids.iter().map(|&i| &self.nodes[i].belief).collect();
            let r = max_abs_diff(&barycenter(&w, &bs), flow.weights());
            if r > TREE_TOL {
                return Ok(self.violation(ids[0], ViolationKind::MeanMeasure, r));
            }
        }
        Ok(TreeReport {
            nodes_checked: self.nodes.len(),
            max_residual,
            violation: None,
        })
    }

    fn worst_child(&self, id: usize) -> usize {
        let node = &self.nodes[id];
        if node.children.len() == 1 {
            return node.children[0];
        }
        // A child whose own mass is off 1 is the one that was tampered with.
        let off = node
            .children
            .iter()
            .map(|&c| (c, (self.nodes[c].belief.weights().iter().sum::<f64>() - 1.0).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match off {
            Some((c, e)) if e > TREE_TOL => c,
            _ => id,
        }
    }

    fn require_valid(&self) -> Result<()> {
        let report = self.validate()?;
        match report.violation {
            None => Ok(()),
            Some(v) => Err(Error::InvalidTree {
                node: v.node,
                reason: format!("{:?} residual {:e}", v.kind, v.residual),
            }),
        }
    }

    /// `E[Σ_q Δ_q H(t_q, M_{t_q})]` by enumeration over the nodes.
    pub fn expected_cost(&self, spec: &PayoffSpec) -> Result<f64> {
        self.require_valid()?;
        let probs = self.path_probabilities();
        let mut total = 0.0;
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            let q = node.stage.expect("non-root");
            total += probs[id] * self.partition.step(q) * hamiltonian(spec, self.partition.time(q), &node.belief)?;
        }
        Ok(total)
    }

    /// `E[Σ_q Δ_q d₁(M_{t_q}, M̂_{t_q})]` with `M̂` the one-step heat prediction.
    pub fn d1_variation(&self) -> Result<f64> {
        self.require_valid()?;
        let probs = self.path_probabilities();
        let mut total = 0.0;
        for (id, node) in self.nodes.iter().enumerate().skip(1) {
            let q = node.stage.expect("non-root");
            total += probs[id] * self.partition.step(q) * wasserstein1(&node.belief, &self.predicted(id)?)?;
        }
        Ok(total)
    }

    /// Canonical text form; see [`MartingaleTree::read`].
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let g = self.grid();
        writeln!(w, "# grid={},{}", g.half_width(), g.len())?;
        let times: Vec<String> = self.partition.times().iter().map(|t| t.to_string()).collect();
        writeln!(w, "# times={}", times.join(","))?;
        for (id, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or("-1".to_string(), |p| p.to_string());
            let stage = n.stage.map_or("-1".to_string(), |s| s.to_string());
            let weights: Vec<String> = n.belief.weights().iter().map(|x| x.to_string()).collect();
            writeln!(w, "{id},{parent},{stage},{},{}", n.prob, weights.join(","))?;
        }
        Ok(())
    }

    /// Parses `node_id,parent_id,time_index,prob,weights...` after the grid and times header lines.
    /// Beliefs are stored as written (not renormalized) so that corrupted inputs are caught by validation.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut grid: Option<Arc<SpatialGrid>> = None;
        let mut partition: Option<Partition> = None;
        let mut tree: Option<MartingaleTree> = None;
        let bad = |msg: String| Error::Parse(msg);
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# grid=") {
                let v: Vec<&str> = rest.split(',').collect();
                if v.len() != 2 {
                    return Err(bad(format!("line {}: grid needs L,n", lineno + 1)));
                }
                let l = v[0].parse::<f64>().map_err(|e| bad(e.to_string()))?;
                let n = v[1].parse::<usize>().map_err(|e| bad(e.to_string()))?;
                grid = Some(SpatialGrid::shared(l, n)?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("# times=") {
                let ts = rest
                    .split(',')
                    .map(|s| s.parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                partition = Some(Partition::new(ts)?);
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let g = grid.clone().ok_or_else(|| bad("missing grid header".into()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 + g.len() {
                return Err(bad(format!("line {}: expected {} fields", lineno + 1, 4 + g.len())));
            }
            let id = fields[0].parse::<usize>().map_err(|e| bad(e.to_string()))?;
            let parent = fields[1].parse::<i64>().map_err(|e| bad(e.to_string()))?;
            let prob = fields[3].parse::<f64>().map_err(|e| bad(e.to_string()))?;
            let weights = fields[4..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(bad(format!("line {}: negative or non-finite weight", lineno + 1)));
            }
            let belief = GridMeasure::raw(g, weights);
            match (&mut tree, parent) {
                (None, -1) => {
                    let p = partition.clone().ok_or_else(|| bad("missing times header".into()))?;
                    tree = Some(MartingaleTree::new(p, belief)?);
                }
                (Some(t), p) if p >= 0 => {
                    let got = t.add_child(p as usize, prob, belief)?;
                    if got != id {
                        return Err(bad(format!("line {}: node ids must be consecutive", lineno + 1)));
                    }
                }
                _ => return Err(bad(format!("line {}: misplaced root", lineno + 1))),
            }
        }
        tree.ok_or_else(|| bad("no nodes".into()))
    }
}

/// Result of [`jensen_check`]: worst `E[d₁(M_{t3}, M_{t1}) | node] − d₁(heat(M_{t2}), M_{t1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct JensenReport {
    pub nodes_checked: usize,
    pub worst_slack: f64,
    pub worst_node: Option<usize>,
}

impl JensenReport {
    pub fn holds(&self) -> bool {
        self.worst_slack >= -TREE_TOL
    }
}

/// Checks `d₁(heat(M_{t2}, t2, t3), M_{t1}) ≤ E[d₁(M_{t3}, M_{t1}) | node]` at every stage-`q2` node.
pub fn jensen_check(tree: &MartingaleTree, q1: usize, q2: usize, q3: usize) -> Result<JensenReport> {
    if !(q1 <= q2 && q2 <= q3 && q3 < tree.partition.n_steps()) {
        return Err(Error::InvalidArgument("need q1 <= q2 <= q3 within the tree's stages".into()));
    }
    let probs = tree.path_probabilities();
    let mut report = JensenReport {
        nodes_checked: 0,
        worst_slack: f64::INFINITY,
        worst_node: None,
    };
    for id in tree.nodes_at(q2) {
        let anc = &tree.node(tree.ancestor_at(id, q1).expect("ancestor exists")).belief;
        let lhs = wasserstein1(&tree.partition.flow(&tree.node(id).belief, q2, q3)?, anc)?;
        let mut rhs = 0.0;
        for d in tree.nodes_at(q3) {
            if tree.ancestor_at(d, q2) == Some(id) {
                rhs += probs[d] / probs[id] * wasserstein1(&tree.node(d).belief, anc)?;
            }
        }
        report.nodes_checked += 1;
        if rhs - lhs < report.worst_slack {
            report.worst_slack = rhs - lhs;
            report.worst_node = Some(id);
        }
    }
    Ok(report)
}

/// Tree whose first split mixes the two roots with weights `(λ, 1 − λ)`.
pub fn mixture_tree(a: &MartingaleTree, b: &MartingaleTree, lambda: f64) -> Result<MartingaleTree> {
    if a.partition != b.partition {
        return Err(Error::PartitionMismatch);
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("mixture weight {lambda} outside [0, 1]")));
    }
    let root = b.root().mix(a.root(), lambda)?;
    let mut out = MartingaleTree::new(a.partition.clone(), root)?;
    for (tree, w) in [(a, lambda), (b, 1.0 - lambda)] {
        if w == 0.0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = tree.node(0).children.iter().rev().map(|&c| (c, 0)).collect();
        while let Some((src, parent)) = stack.pop() {
            let n = tree.node(src);
            let prob = if parent == 0 { w * n.prob } else { n.prob };
            let id = out.add_child(parent, prob, n.belief.clone())?;
            stack.extend(n.children.iter().rev().map(|&c| (c, id)));
        }
    }
    Ok(out)
}
