mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use winfo_core::measure::{heat_evolve, GridMeasure, SpatialGrid};
use winfo_core::partition::Partition;
use winfo_core::payoff::PayoffSpec;
use winfo_core::value::{non_revealing_value, solve_value, vex_on_lattice, BeliefLattice};

fn lattice_1d(r: usize) -> Vec<Vec<f64>> {
    (0..=r).map(|k| vec![k as f64 / r as f64, 1.0 - k as f64 / r as f64]).collect()
}

#[test]
fn vex_matches_brute_force_pairs_and_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let r = 50;
    let points = lattice_1d(r);
    let first: Vec<f64> = points.iter().map(|p| p[0]).collect();
    for _ in 0..20 {
        let g: Vec<f64> = (0..=r).map(|_| rng.random_range(-1.0..1.0)).collect();
        for k in 0..=r {
            let (v, plan) = vex_on_lattice(&points, &g, &points[k]).unwrap();
            let pairs = oracles::brute_vex_1d(&first, &g, first[k]);
            let triples = oracles::brute_vex_1d_triples(&first, &g, first[k]);
            assert!((v - pairs).abs() <= 1e-9, "point {k}: {v} vs {pairs}");
            assert!((pairs - triples).abs() <= 1e-12);
            assert!(plan.atoms.len() <= 2);
        }
        let q: f64 = rng.random_range(0.0..1.0);
        let (v, _) = vex_on_lattice(&points, &g, &[q, 1.0 - q]).unwrap();
        assert!((v - oracles::brute_vex_1d(&first, &g, q)).abs() <= 1e-9);
    }
}

#[test]
fn value_matches_tree_enumeration() {
    let grid = SpatialGrid::shared(8.0, 257).unwrap();
    let partition = Partition::uniform(0.0, 1.0, 3).unwrap();
    let lattice = BeliefLattice::new(grid.clone(), &[-1.0, 1.0], 25).unwrap();
    for name in ["matching-pennies-x", "bimodal-pursuit", "position"] {
        let spec = PayoffSpec::builtin(name, 8.0, (0.0, 1.0)).unwrap();
        let table = solve_value(&spec, &partition, &lattice).unwrap();
        let atoms = [
            GridMeasure::from_atoms(grid.clone(), &[(-1.0, 1.0)]).unwrap(),
            GridMeasure::from_atoms(grid.clone(), &[(1.0, 1.0)]).unwrap(),
        ];
        let mut oracle = oracles::TreeEnumeration::new(&spec, &partition, atoms, 25);
        for k in 0..=25 {
            let v = table.value(0, k);
            let o = oracle.value(k);
            assert!((v - o).abs() <= 1e-9, "{name} point {k}: {v} vs {o}");
        }
    }
}

#[test]
fn non_revealing_matches_direct_quadrature() {
    let grid = SpatialGrid::shared(8.0, 257).unwrap();
    let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
    let partition = Partition::uniform(0.0, 1.0, 4).unwrap();
    let m = GridMeasure::from_atoms(grid, &[(-1.0, 0.3), (1.0, 0.7)]).unwrap();
    let mut direct = 0.0;
    for q in 0..4 {
        let t = partition.time(q);
        let flowed = if q == 0 { m.clone() } else { heat_evolve(&m, 0.0, t).unwrap() };
        let mut a = vec![vec![0.0; spec.n_v()]; spec.n_u()];
        for (i, w) in flowed.weights().iter().enumerate() {
            for (u, row) in a.iter_mut().enumerate() {
                for (v, e) in row.iter_mut().enumerate() {
                    *e += w * spec.eval(t, flowed.grid().node(i), u, v);
                }
            }
        }
        direct += partition.step(q) * oracles::game_support_enumeration(&a);
    }
    let got = non_revealing_value(&spec, &m, &partition).unwrap();
    assert!((got - direct).abs() <= 1e-9, "{got} vs {direct}");
}
