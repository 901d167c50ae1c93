use proptest::prelude::*;
use std::sync::Arc;
use winfo_core::hamiltonian::{hamiltonian, matrix_game_value, pure_values};
use winfo_core::measure::{heat_evolve, heat_kernel, wasserstein1, wasserstein2, GridMeasure, SpatialGrid};
use winfo_core::payoff::PayoffSpec;

fn grid() -> Arc<SpatialGrid> {
    SpatialGrid::shared(8.0, 257).unwrap()
}

fn measure_strategy(radius: i64) -> impl Strategy<Value = GridMeasure> {
    prop::collection::vec((-radius..=radius, 0.05f64..1.0), 1..=6).prop_map(|atoms| {
        let g = grid();
        let mut w = vec![0.0; g.len()];
        for (k, p) in atoms {
            w[(g.center() as i64 + k) as usize] += p;
        }
        GridMeasure::normalized(g, w).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric(a in measure_strategy(128), b in measure_strategy(128), c in measure_strategy(128)) {
        let ab = wasserstein1(&a, &b).unwrap();
        prop_assert_eq!(ab, wasserstein1(&b, &a).unwrap());
        prop_assert!(wasserstein1(&a, &c).unwrap() <= ab + wasserstein1(&b, &c).unwrap() + 1e-12);
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_ordering(a in measure_strategy(128), b in measure_strategy(128)) {
        let d1 = wasserstein1(&a, &b).unwrap();
        let d2 = wasserstein2(&a, &b).unwrap();
        prop_assert!(d1 <= d2 + 1e-12);
        prop_assert!(d2 <= (d1 * 2.0 * 8.0).sqrt() + 1e-12);
    }

    #[test]
    fn heat_contraction_and_reverse_bound(
        a in measure_strategy(128),
        b in measure_strategy(128),
        t in 0.0f64..1.0,
        len in 0.0f64..1.0,
    ) {
        let s = t + len;
        let ha = heat_evolve(&a, t, s).unwrap();
        let hb = heat_evolve(&b, t, s).unwrap();
        let d = wasserstein1(&a, &b).unwrap();
        let dh = wasserstein1(&ha, &hb).unwrap();
        prop_assert!(dh <= d + 1e-9);
        prop_assert!(d <= dh + 2.0 * len.sqrt() + 1e-3);
        prop_assert!((ha.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kernel_rows_are_probabilities(delta in 1e-4f64..2.0) {
        let k = heat_kernel(grid(), delta).unwrap();
        for i in (0..257).step_by(16) {
            prop_assert!((k.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixed_value_between_pure_values(entries in prop::collection::vec(-5.0f64..5.0, 12), rows in 1usize..5) {
        let cols = 12 / rows.max(1);
        let a: Vec<Vec<f64>> = (0..rows).map(|i| entries[i * cols..(i + 1) * cols].to_vec()).collect();
        let sol = matrix_game_value(&a).unwrap();
        let (minmax, maxmin) = pure_values(&a).unwrap();
        prop_assert!(maxmin - 1e-9 <= sol.value && sol.value <= minmax + 1e-9);
        let guarantee = (0..rows)
            .map(|i| (0..cols).map(|j| a[i][j] * sol.col[j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((guarantee - sol.value).abs() <= 1e-9);
        prop_assert!((sol.row.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && sol.row.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn hamiltonian_affine_equivariance(m in measure_strategy(64), scale in 0.1f64..5.0, shift in -3.0f64..3.0, t in 0.0f64..1.0) {
        let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
        let moved = spec.affine(scale, shift).unwrap();
        let h = hamiltonian(&spec, t, &m).unwrap();
        prop_assert!((hamiltonian(&moved, t, &m).unwrap() - (scale * h + shift)).abs() <= 1e-9);
    }

    #[test]
    fn hamiltonian_lipschitz(a in measure_strategy(128), b in measure_strategy(128), t in 0.0f64..1.0) {
        let spec = PayoffSpec::builtin("matching-pennies-x", 8.0, (0.0, 1.0)).unwrap();
        let dh = (hamiltonian(&spec, t, &a).unwrap() - hamiltonian(&spec, t, &b).unwrap()).abs();
        prop_assert!(dh <= spec.c() * wasserstein1(&a, &b).unwrap() + 1e-9);
    }
}
