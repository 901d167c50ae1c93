use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use winfo_core::martingale::{bayes_posterior_sample, jensen_check, mixture_tree, MartingaleTree, SplittingPlan};
use winfo_core::measure::{heat_evolve, GridMeasure, SpatialGrid};
use winfo_core::partition::Partition;
use winfo_core::payoff::PayoffSpec;
use winfo_core::value::{solve_value, BeliefLattice};

fn grid() -> Arc<SpatialGrid> {
    SpatialGrid::shared(8.0, 257).unwrap()
}

/// Splits `m` by a logistic colouring `φ(x) = 1/(1+e^{-(a x + b)})`.
fn logistic_split(m: &GridMeasure, a: f64, b: f64) -> SplittingPlan {
    let g = m.grid().clone();
    let phi: Vec<f64> = (0..g.len()).map(|i| 1.0 / (1.0 + (-(a * g.node(i) + b)).exp())).collect();
    let left: Vec<f64> = m.weights().iter().zip(&phi).map(|(w, p)| w * p).collect();
    let right: Vec<f64> = m.weights().iter().zip(&phi).map(|(w, p)| w * (1.0 - p)).collect();
    let (wl, wr) = (left.iter().sum::<f64>(), right.iter().sum::<f64>());
    if wl < 1e-12 || wr < 1e-12 {
        return SplittingPlan::singleton(m.clone());
    }
    let l = GridMeasure::normalized(g.clone(), left).unwrap();
    let r = GridMeasure::normalized(g, right).unwrap();
    SplittingPlan::new(vec![wl, wr], vec![l, r], Some(m)).unwrap()
}

fn random_tree(seed: u64, n: usize) -> MartingaleTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = Partition::uniform(0.0, 1.0, n).unwrap();
    let m = GridMeasure::from_atoms(grid(), &[(-1.0, 0.4), (0.5, 0.35), (2.0, 0.25)]).unwrap();
    MartingaleTree::build(partition, m, |_, predicted| {
        let (a, b) = (rng.random_range(-4.0..4.0), rng.random_range(-1.0..1.0));
        Ok(logistic_split(predicted, a, b))
    })
    .unwrap()
}

fn solver_tree(support: &[f64], coords: &[f64]) -> (MartingaleTree, PayoffSpec) {
    let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
    let partition = Partition::uniform(0.0, 1.0, 4).unwrap();
    let lattice = BeliefLattice::new(grid(), support, 8).unwrap();
    let table = solve_value(&spec, &partition, &lattice).unwrap();
    (table.splitting_tree(coords, 1_000_000).unwrap(), spec)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check_tree_identities(tree: &MartingaleTree) {
    assert!(tree.validate().unwrap().is_valid());
    let probs = tree.path_probabilities();
    let partition = tree.partition();
    for q in 0..partition.n_steps() {
        let direct = if q == 0 { tree.root().clone() } else { heat_evolve(tree.root(), partition.start(), partition.time(q)).unwrap() };
        let mut mix = vec![0.0; direct.weights().len()];
        for id in tree.nodes_at(q) {
            for (o, w) in mix.iter_mut().zip(tree.node(id).belief.weights()) {
                *o += probs[id] * w;
            }
        }
        // The iterated and direct flows agree to the kernel's semigroup error.
        assert!(max_abs(&mix, direct.weights()) <= 1e-6, "stage {q}");
    }
    for (id, node) in tree.nodes().iter().enumerate() {
        if node.children.is_empty() {
            continue;
        }
        let after: f64 = node.children.iter().map(|&c| tree.node(c).prob * tree.node(c).belief.second_moment()).sum();
        assert!(after >= node.belief.second_moment() - 1e-9, "node {id}");
    }
    let n = partition.n_steps();
    for q1 in 0..n {
        for q2 in q1..n {
            for q3 in q2..n {
                assert!(jensen_check(tree, q1, q2, q3).unwrap().holds(), "({q1},{q2},{q3})");
            }
        }
    }
}

#[test]
fn solver_trees_satisfy_identities() {
    for (support, coords) in [
        (vec![-1.0, 1.0], vec![0.5, 0.5]),
        (vec![-1.0, 1.0], vec![0.125, 0.875]),
        (vec![-1.0, 0.0, 1.0], vec![0.25, 0.375, 0.375]),
    ] {
        let (tree, _) = solver_tree(&support, &coords);
        check_tree_identities(&tree);
    }
}

#[test]
fn mixture_cost_is_linear() {
    let (a, spec) = solver_tree(&[-1.0, 1.0], &[0.5, 0.5]);
    let (b, _) = solver_tree(&[-1.0, 1.0], &[0.125, 0.875]);
    let (ca, cb) = (a.expected_cost(&spec).unwrap(), b.expected_cost(&spec).unwrap());
    for lambda in [0.0, 0.3, 0.5, 1.0] {
        let m = mixture_tree(&a, &b, lambda).unwrap();
        assert!(m.validate().unwrap().is_valid());
        let c = m.expected_cost(&spec).unwrap();
        assert!((c - (lambda * ca + (1.0 - lambda) * cb)).abs() <= 1e-9);
    }
}

#[test]
fn trees_round_trip_through_text() {
    let tree = random_tree(3, 3);
    let mut buf = Vec::new();
    tree.write(&mut buf).unwrap();
    let back = MartingaleTree::read(buf.as_slice()).unwrap();
    assert_eq!(back.len(), tree.len());
    let mut again = Vec::new();
    back.write(&mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn bayes_sampler_joint_law() {
    let g = grid();
    let posts = vec![
        GridMeasure::from_atoms(g.clone(), &[(-1.0, 0.7), (0.0, 0.3)]).unwrap(),
        GridMeasure::from_atoms(g.clone(), &[(0.0, 0.5), (1.0, 0.5)]).unwrap(),
        GridMeasure::from_atoms(g.clone(), &[(-1.0, 0.2), (1.0, 0.8)]).unwrap(),
    ];
    let lambda = vec![0.5, 0.3, 0.2];
    let plan = SplittingPlan::new(lambda.clone(), posts.clone(), None).unwrap();
    let prior = GridMeasure::new(g.clone(), plan.barycenter()).unwrap();
    let nodes: Vec<usize> = prior.support();
    let n = 1_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![vec![0usize; 3]; nodes.len()];
    let mut atom_counts = [0usize; 3];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut xi = nodes.len() - 1;
        for (j, &x) in nodes.iter().enumerate() {
            acc += prior.weight(x);
            if u < acc {
                xi = j;
                break;
            }
        }
        let k = bayes_posterior_sample(&plan, nodes[xi], &mut rng).unwrap();
        counts[xi][k] += 1;
        atom_counts[k] += 1;
    }
    for (j, &x) in nodes.iter().enumerate() {
        for k in 0..3 {
            let p = lambda[k] * posts[k].weight(x);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let f = counts[j][k] as f64 / n as f64;
            assert!((f - p).abs() <= 3.0 * se.max(1e-12), "x={x} k={k}: {f} vs {p}");
        }
    }
    for k in 0..3 {
        let se = (lambda[k] * (1.0 - lambda[k]) / n as f64).sqrt();
        assert!((atom_counts[k] as f64 / n as f64 - lambda[k]).abs() <= 3.0 * se);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_trees_satisfy_identities(seed in any::<u64>(), n in 2usize..5) {
        check_tree_identities(&random_tree(seed, n));
    }

    #[test]
    fn random_mixtures_are_linear(s1 in any::<u64>(), s2 in any::<u64>(), lambda in 0.0f64..1.0) {
        let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
        let (a, b) = (random_tree(s1, 3), random_tree(s2, 3));
        let m = mixture_tree(&a, &b, lambda).unwrap();
        let expected = lambda * a.expected_cost(&spec).unwrap() + (1.0 - lambda) * b.expected_cost(&spec).unwrap();
        prop_assert!((m.expected_cost(&spec).unwrap() - expected).abs() <= 1e-9);
    }
}
