use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use winfo_core::hamiltonian::{hamiltonian, random_measure};
use winfo_core::measure::{heat_evolve, GridMeasure, SpatialGrid};
use winfo_core::partition::Partition;
use winfo_core::payoff::PayoffSpec;
use winfo_core::pde::{
    comparison_check, explicit_solution, flat_derivative, flow_derivative_check, generator, psi_delta,
    psi_delta_flat_derivative, subsolution_flow_check, truncation_check, FlowSample, MeasureFunctional, Quadrature,
    DEFAULT_FLAT_STEP,
};
use winfo_core::value::{solve_value, BeliefLattice};

fn grid() -> Arc<SpatialGrid> {
    SpatialGrid::shared(8.0, 257).unwrap()
}

#[test]
fn second_moment_generator_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let u = MeasureFunctional::second_moment();
    for _ in 0..20 {
        let m = random_measure(&grid(), &mut rng, 6, 3.0);
        let t = rng.random_range(0.0..0.9);
        let g = generator(&u, t, &m, DEFAULT_FLAT_STEP, 1.0 / 64.0).unwrap();
        assert!((g.value - 1.0).abs() <= 1e-3, "{}", g.value);
    }
}

#[test]
fn second_moment_consistency_over_dt_sweep() {
    let u = MeasureFunctional::second_moment();
    let m = GridMeasure::from_atoms(grid(), &[(-1.5, 0.4), (0.5, 0.6)]).unwrap();
    for dt in [0.2, 0.1, 0.05, 0.025] {
        let r = flow_derivative_check(&u, 0.1, &m, DEFAULT_FLAT_STEP, dt).unwrap();
        assert!(r.residual <= 10.0 * (dt + 1e-6), "dt {dt}: {}", r.residual);
    }
}

#[test]
fn flat_derivative_of_linear_functionals() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let g = grid();
    for _ in 0..20 {
        let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..2.0));
        let phi = move |x: f64| a * x + b * (c * x).sin();
        let u = MeasureFunctional::linear("random", phi);
        let m = random_measure(&g, &mut rng, 6, 6.0);
        let d1 = flat_derivative(&u, 0.0, &m, 1e-4).unwrap();
        let d2 = flat_derivative(&u, 0.0, &m, 0.25).unwrap();
        let mean = m.integrate(phi);
        for i in 0..g.len() {
            assert!((d1[i] - d2[i]).abs() <= 1e-9);
            assert!((d1[i] - (phi(g.node(i)) - mean)).abs() <= 1e-9);
        }
        let norm: f64 = d1.iter().zip(m.weights()).map(|(d, w)| d * w).sum();
        assert!(norm.abs() <= 1e-12);
    }
}

#[test]
fn explicit_solution_semigroup() {
    let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
    let f = MeasureFunctional::hamiltonian(&spec);
    let phi = explicit_solution(&f, &MeasureFunctional::constant(0.0), 1.0, 64).unwrap();
    let m = GridMeasure::from_atoms(grid(), &[(-1.0, 0.5), (1.0, 0.5)]).unwrap();
    let (t, s) = (0.0, 0.5);
    let lhs = phi.eval(t, &m).unwrap();
    let flowed = heat_evolve(&m, t, s).unwrap();
    let n = 64;
    let ds = (s - t) / n as f64;
    let integral: f64 = (0..n)
        .map(|k| {
            let r = t + (k as f64 + 0.5) * ds;
            ds * hamiltonian(&spec, r, &heat_evolve(&m, t, r).unwrap()).unwrap()
        })
        .sum();
    assert!((lhs - phi.eval(s, &flowed).unwrap() - integral).abs() <= 1e-3);
}

#[test]
fn non_revealing_solves_the_linear_equation() {
    for name in ["matching-pennies-x", "bimodal-pursuit"] {
        let spec = PayoffSpec::builtin(name, 8.0, (0.0, 1.0)).unwrap();
        let u0 = MeasureFunctional::non_revealing(&spec, 32).unwrap();
        let m = GridMeasure::from_atoms(grid(), &[(-1.0, 0.3), (1.0, 0.7)]).unwrap();
        let dt = 1.0 / 64.0;
        let t = 0.25;
        let g = generator(&u0, t, &m, DEFAULT_FLAT_STEP, dt).unwrap().value;
        let h = hamiltonian(&spec, t, &m).unwrap();
        assert!((g + h).abs() <= 5e-2, "{name}: {}", g + h);
        let rep = flow_derivative_check(&u0, t, &m, DEFAULT_FLAT_STEP, dt).unwrap();
        match rep.richardson_slope {
            Some(slope) => assert!(slope >= 0.8, "{name}: slope {slope}, residuals {} {}", rep.residual, rep.residual_half),
            None => assert!(name == "matching-pennies-x" && rep.residual <= rep.noise_floor),
        }
    }
}

#[test]
fn interpolated_value_is_a_flow_subsolution() {
    let spec = PayoffSpec::builtin("bimodal-pursuit", 8.0, (0.0, 1.0)).unwrap();
    let partition = Partition::uniform(0.0, 1.0, 8).unwrap();
    let lattice = BeliefLattice::new(grid(), &[-1.0, 1.0], 25).unwrap();
    let table = Arc::new(solve_value(&spec, &partition, &lattice).unwrap());
    let u = MeasureFunctional::interpolated_value(table.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let samples: Vec<FlowSample> = (0..60)
        .map(|_| {
            let q = rng.random_range(0..8);
            let q2 = rng.random_range(q + 1..=8);
            let k = rng.random_range(0..lattice.len());
            FlowSample { t0: partition.time(q), m0: table.point_measure(q, k), s: partition.time(q2) }
        })
        .collect();
    let rep = subsolution_flow_check(&u, &spec, &samples, &Quadrature::LeftEndpoint(partition.clone()), 5e-3).unwrap();
    assert!(rep.passed(), "worst slack {}", rep.worst_slack());
    let samples: Vec<(f64, GridMeasure)> = (0..=8).map(|q| (partition.time(q), table.point_measure(q, 12))).collect();
    let f = MeasureFunctional::hamiltonian(&spec);
    let cmp = comparison_check(&u, &f, &MeasureFunctional::constant(0.0), 1.0, &samples, 64, 5e-3).unwrap();
    assert!(cmp.skipped.is_none() && cmp.passed(), "worst slack {}", cmp.worst_slack());
}

#[test]
fn psi_delta_barrier() {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let m1 = GridMeasure::from_atoms(g.clone(), &[(-0.5, 0.5), (1.0, 0.5)]).unwrap();
    let delta = 0.05;
    assert!(psi_delta(&m1, &m1, delta).unwrap() <= 1e-6);
    for _ in 0..50 {
        let m = random_measure(&g, &mut rng, 6, 4.0);
        assert!(psi_delta(&m, &m1, delta).unwrap() >= -1e-6);
    }
    let m = GridMeasure::from_atoms(g.clone(), &[(-1.0, 0.3), (0.5, 0.7)]).unwrap();
    let closed = psi_delta_flat_derivative(&m, &m1, delta).unwrap();
    let psi = MeasureFunctional::new("psi", winfo_core::pde::Tier::A1, move |_, x| psi_delta(x, &m1, delta));
    let coarse = flat_derivative(&psi, 0.0, &m, 1e-6).unwrap();
    let fine = flat_derivative(&psi, 0.0, &m, 5e-7).unwrap();
    // Far from the data the integrand's curvature scale is below any usable step.
    let err = (0..g.len())
        .filter(|&i| g.node(i).abs() <= 2.0)
        .map(|i| (closed[i] - (2.0 * fine[i] - coarse[i])).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn truncation_bounds() {
    let g = grid();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    for name in ["matching-pennies-x", "bimodal-pursuit"] {
        let spec = PayoffSpec::builtin(name, 8.0, (0.0, 1.0)).unwrap();
        let samples: Vec<(f64, GridMeasure)> =
            (0..50).map(|_| (rng.random_range(0.0..1.0), random_measure(&g, &mut rng, 6, 8.0))).collect();
        for radius in [0.5, 1.0, 2.0, 4.0] {
            let rep = truncation_check(&spec, radius, &samples, 1e-9).unwrap();
            assert!(rep.passed(), "{name} R={radius}: {}", rep.worst_slack());
        }
    }
}
