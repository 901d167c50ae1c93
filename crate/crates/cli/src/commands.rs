//! Subcommand bodies. Each returns the process exit code on success.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use winfo_core::game::{
    evaluate_exact, liminf_bound_check, simulate, write_playouts_csv, BestReply, InformedStrategy, PureTau,
    UniformPolicy, UninformedPolicy,
};
use winfo_core::hamiltonian::{hamiltonian, random_measure};
use winfo_core::martingale::MartingaleTree;
use winfo_core::measure::{heat_evolve, total_variation, wasserstein1, wasserstein2, GridMeasure};
use winfo_core::partition::Partition;
use winfo_core::pde::{
    comparison_check, flow_derivative_check, generator, psi_delta, subsolution_flow_check, truncation_check,
    write_report_csv, CheckReport, FlowSample, MeasureFunctional, Quadrature,
};
use winfo_core::value::{convergence_study, format_f64, solve_value, write_convergence_csv, BeliefLattice, ValueTable};
use winfo_core::{Error, Result};

use crate::config::{ExperimentConfig, VERSION};

fn create(cfg: &ExperimentConfig, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut w = BufWriter::new(File::create(cfg.out_dir.join(name))?);
    w.write_all(cfg.header().as_bytes())?;
    Ok(w)
}

pub struct Solved {
    pub partition: Partition,
    pub lattice: BeliefLattice,
    pub table: ValueTable,
}

pub fn solve_table(cfg: &ExperimentConfig) -> Result<Solved> {
    let spec = cfg.payoff()?;
    let partition = Partition::uniform(cfg.start, cfg.end, cfg.n_steps)?;
    let lattice = BeliefLattice::new(cfg.grid()?, &cfg.support, cfg.resolution)?;
    let table = solve_value(&spec, &partition, &lattice)?;
    Ok(Solved {
        partition,
        lattice,
        table,
    })
}

pub fn solve(cfg: &ExperimentConfig) -> Result<i32> {
    let spec = cfg.payoff()?;
    let solved = solve_table(cfg)?;
    let table = &solved.table;
    let mut w = create(cfg, "value.csv")?;
    writeln!(w, "# solve_hash={}", cfg.solve_hash())?;
    table.write_values_csv(w)?;
    table.write_baseline_csv(create(cfg, "baseline.csv")?)?;
    table.write_plans_csv(create(cfg, "plans.csv")?)?;
    let coords = cfg.prior_coords();
    if !cfg.convergence.is_empty() {
        let rows = convergence_study(&spec, &solved.lattice, cfg.start, cfg.end, &coords, &cfg.convergence)?;
        write_convergence_csv(&rows, create(cfg, "convergence.csv")?)?;
    }
    let v = table.value_at(0, &coords)?;
    let u0 = winfo_core::value::non_revealing_value(&spec, &table.measure(0, &coords), &solved.partition)?;
    println!("solve spec={} n_steps={} points={} value={} nonrevealing={}", spec.name(), cfg.n_steps, solved.lattice.len(), format_f64(v), format_f64(u0));
    Ok(0)
}

fn read_pure_tau(path: &Path, n_u: usize, n_v: usize, n_steps: usize) -> Result<PureTau> {
    let mut choices: Vec<Vec<Option<usize>>> = (0..n_steps).map(|q| vec![None; n_u.pow(q as u32)]).collect();
    let file = BufReader::new(File::open(path)?);
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("stage") {
            continue;
        }
        let f: Vec<usize> = line
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("tau file line {}: {line}", lineno + 1))))
            .collect::<Result<_>>()?;
        if f.len() != 3 || f[0] >= n_steps || f[1] >= choices[f[0]].len() {
            return Err(Error::Parse(format!("tau file line {}: expected stage,history_code,v", lineno + 1)));
        }
        choices[f[0]][f[1]] = Some(f[2]);
    }
    let choices = choices
        .into_iter()
        .enumerate()
        .map(|(q, row)| {
            row.into_iter()
                .enumerate()
                .map(|(c, v)| v.ok_or_else(|| Error::Parse(format!("tau file misses stage {q} history {c}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PureTau::new(n_u, n_v, choices)
}

fn require_value_table(cfg: &ExperimentConfig) -> Result<()> {
    let path = cfg.out_dir.join("value.csv");
    let second = File::open(&path)
        .ok()
        .and_then(|f| BufReader::new(f).lines().nth(1))
        .and_then(|l| l.ok());
    if second == Some(format!("# solve_hash={}", cfg.solve_hash())) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "missing-value-table: {} absent or from another config; run solve or pass --solve-first",
            path.display()
        )))
    }
}

pub struct PlayArgs {
    pub solve_first: bool,
    pub sigma_file: Option<PathBuf>,
    pub tau_file: Option<PathBuf>,
}

pub fn play(cfg: &ExperimentConfig, args: &PlayArgs) -> Result<i32> {
    if args.solve_first {
        solve(cfg)?;
    } else {
        require_value_table(cfg)?;
    }
    let spec = cfg.payoff()?;
    let solved = solve_table(cfg)?;
    let coords = cfg.prior_coords();
    let m = solved.table.measure(0, &coords);
    let sigma = match cfg.sigma.as_str() {
        "optimal" => InformedStrategy::optimal(&solved.table, &spec, &coords, cfg.budget)?,
        "nonrevealing" => InformedStrategy::non_revealing(&solved.partition, &m, &spec)?,
        "fullrevealing" => InformedStrategy::full_revealing(&solved.partition, &m, &spec)?,
        "file" => {
            let path = args
                .sigma_file
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--sigma file needs --sigma-file".into()))?;
            InformedStrategy::from_tree(MartingaleTree::read(BufReader::new(File::open(path)?))?, &spec)?
        }
        other => return Err(Error::InvalidArgument(format!("unknown sigma {other}"))),
    };
    let best = BestReply::new(&sigma);
    let uniform = UniformPolicy { n_v: spec.n_v() };
    let file_tau;
    let tau: &dyn UninformedPolicy = match cfg.tau.as_str() {
        "bestreply" => &best,
        "uniform" => &uniform,
        "file" => {
            let path = args
                .tau_file
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--tau file needs --tau-file".into()))?;
            file_tau = read_pure_tau(path, spec.n_u(), spec.n_v(), cfg.n_steps)?;
            &file_tau
        }
        other => return Err(Error::InvalidArgument(format!("unknown tau {other}"))),
    };
    let (mode, mean, se) = if cfg.samples == 0 {
        write_playouts_csv(&[], create(cfg, "playouts.csv")?)?;
        ("exact", evaluate_exact(&sigma, tau, cfg.budget)?, None)
    } else {
        let (est, records) = simulate(&sigma, tau, cfg.samples, cfg.seed, true)?;
        write_playouts_csv(&records, create(cfg, "playouts.csv")?)?;
        ("montecarlo", est.mean, Some(est.std_error))
    };
    let upper = sigma.tree_cost();
    let value = solved.table.value_at(0, &coords)?;
    let lower = liminf_bound_check(&sigma, cfg.budget)?.bound;
    let mut w = create(cfg, "summary.csv")?;
    writeln!(w, "sigma,tau,mode,mean,std_error,upper_guarantee,value_table,lower_bound")?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        cfg.sigma,
        cfg.tau,
        mode,
        format_f64(mean),
        se.map_or(String::new(), format_f64),
        format_f64(upper),
        format_f64(value),
        format_f64(lower)
    )?;
    w.flush()?;
    println!(
        "play sigma={} tau={} mode={mode} mean={} std_error={} upper_guarantee={} value={} lower_bound={}",
        cfg.sigma,
        cfg.tau,
        format_f64(mean),
        se.map_or("-".into(), format_f64),
        format_f64(upper),
        format_f64(value),
        format_f64(lower)
    );
    Ok(0)
}

pub const CHECKS: &[&str] = &["generator", "flow", "subsolution", "psi-delta", "comparison", "truncation", "tree"];

fn sample_measures(cfg: &ExperimentConfig, radius: f64, seed_offset: u64) -> Result<Vec<(f64, GridMeasure)>> {
    let grid = cfg.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.check_seed.wrapping_add(seed_offset));
    Ok((0..cfg.check_samples)
        .map(|_| {
            let t = rng.random_range(cfg.start..cfg.end);
            (t, random_measure(&grid, &mut rng, 6, radius))
        })
        .collect())
}

fn check_generator(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let u = MeasureFunctional::second_moment();
    let dt = cfg.dt.unwrap_or((cfg.end - cfg.start) / cfg.n_steps as f64 / 4.0);
    let mut rep = CheckReport::new("generator", cfg.tolerance("generator"));
    for (id, (t, m)) in sample_measures(cfg, cfg.half_width / 2.0, 1)?.iter().enumerate() {
        let g = generator(&u, *t, m, cfg.flat_step, dt)?.value;
        rep.push(*t, id, g, 1.0, -(g - 1.0).abs());
    }
    Ok(vec![rep])
}

fn check_flow(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let spec = cfg.payoff()?;
    let solved = solve_table(cfg)?;
    let p = &solved.partition;
    let u0 = MeasureFunctional::non_revealing(&spec, cfg.n_quad)?;
    let dt = cfg.dt.unwrap_or(p.mesh() / 4.0);
    let m = solved.table.measure(0, &cfg.prior_coords());
    let mut rep = CheckReport::new("flow", cfg.tolerance("flow"));
    let mut slope = CheckReport::new("richardson", 0.0);
    for q in 0..p.n_steps() {
        let t = p.time(q);
        if t + dt > p.end() + 1e-12 {
            continue;
        }
        let mq = if q == 0 { m.clone() } else { heat_evolve(&m, p.start(), t)? };
        let d = flow_derivative_check(&u0, t, &mq, cfg.flat_step, dt)?;
        let h = hamiltonian(&spec, t, &mq)?;
        rep.push(t, q, d.generator, -h, -(d.generator + h).abs());
        let target = cfg.tolerance("richardson");
        match d.richardson_slope {
            Some(s) => slope.push(t, q, s, target, s - target),
            // Both residuals at the roundoff floor: the slope is undefined.
            None => slope.push(t, q, d.residual.max(d.residual_half), d.noise_floor, d.noise_floor - d.residual.max(d.residual_half)),
        }
    }
    Ok(vec![rep, slope])
}

fn check_subsolution(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let spec = cfg.payoff()?;
    let solved = solve_table(cfg)?;
    let n = solved.partition.n_steps();
    let table = Arc::new(solved.table);
    let u = MeasureFunctional::interpolated_value(table.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.check_seed.wrapping_add(3));
    let samples: Vec<FlowSample> = (0..cfg.check_samples)
        .map(|_| {
            let q = rng.random_range(0..n);
            let q2 = rng.random_range(q + 1..=n);
            let k = rng.random_range(0..solved.lattice.len());
            FlowSample {
                t0: solved.partition.time(q),
                m0: table.point_measure(q, k),
                s: solved.partition.time(q2),
            }
        })
        .collect();
    let tol = cfg.tolerance("subsolution");
    let left = subsolution_flow_check(&u, &spec, &samples, &Quadrature::LeftEndpoint(solved.partition.clone()), tol)?;
    let mut mid = subsolution_flow_check(&u, &spec, &samples, &Quadrature::Midpoint(cfg.n_quad), tol)?;
    mid.name = "subsolution-midpoint".into();
    mid.records.iter_mut().for_each(|r| r.check_name = mid.name.clone());
    Ok(vec![left, mid])
}

fn check_psi_delta(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let solved = solve_table(cfg)?;
    let m1 = solved.table.measure(0, &cfg.prior_coords());
    let mut rep = CheckReport::new("psi-delta", cfg.tolerance("psi-delta"));
    let v = psi_delta(&m1, &m1, cfg.delta)?;
    rep.push(cfg.start, 0, v, 0.0, -v);
    for (id, (t, m)) in sample_measures(cfg, cfg.half_width / 2.0, 4)?.iter().enumerate() {
        let v = psi_delta(m, &m1, cfg.delta)?;
        rep.push(*t, id + 1, v, 0.0, v);
    }
    Ok(vec![rep])
}

fn check_comparison(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let spec = cfg.payoff()?;
    let solved = solve_table(cfg)?;
    let n = solved.partition.n_steps();
    let table = Arc::new(solved.table);
    let u = MeasureFunctional::interpolated_value(table.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.check_seed.wrapping_add(5));
    let samples: Vec<(f64, GridMeasure)> = (0..cfg.check_samples.min(50))
        .map(|_| {
            let q = rng.random_range(0..=n);
            let k = rng.random_range(0..solved.lattice.len());
            (solved.partition.time(q), table.point_measure(q, k))
        })
        .collect();
    let f = MeasureFunctional::hamiltonian(&spec);
    let psi = MeasureFunctional::constant(0.0);
    Ok(vec![comparison_check(&u, &f, &psi, cfg.end, &samples, cfg.n_quad, cfg.tolerance("comparison"))?])
}

fn check_truncation(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let spec = cfg.payoff()?;
    let samples = sample_measures(cfg, cfg.half_width, 6)?;
    Ok(vec![truncation_check(&spec, cfg.radius, &samples, cfg.tolerance("truncation"))?])
}

fn check_tree(cfg: &ExperimentConfig, tree_file: Option<&Path>) -> Result<Vec<CheckReport>> {
    let tree = match tree_file {
        Some(path) => MartingaleTree::read(BufReader::new(File::open(path)?))?,
        None => {
            let solved = solve_table(cfg)?;
            solved.table.splitting_tree(&cfg.prior_coords(), cfg.budget)?
        }
    };
    let report = tree.validate()?;
    let mut rep = CheckReport::new("tree", cfg.tolerance("tree"));
    match &report.violation {
        Some(v) => {
            let t = tree.node(v.node).stage.map_or(tree.partition().start(), |q| tree.partition().time(q));
            let residual = if v.residual.is_finite() { v.residual } else { f64::MAX };
            rep.push(t, v.node, residual, 0.0, -residual);
            eprintln!("tree violation: node {} kind {:?} path {:?} residual {:e}", v.node, v.kind, v.path, v.residual);
        }
        None => rep.push(tree.partition().start(), 0, report.max_residual, 0.0, -report.max_residual),
    }
    Ok(vec![rep])
}

/// Reports that are printed and written but do not decide the exit code.
const DIAGNOSTICS: &[&str] = &["subsolution-midpoint"];

pub fn check(cfg: &ExperimentConfig, which: &[String], tree_file: Option<&Path>) -> Result<i32> {
    println!(
        "# env os={} arch={} version={} threads={} config_hash={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        VERSION,
        rayon::current_num_threads(),
        cfg.hash()
    );
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for name in which {
        let start = Instant::now();
        let reps = match name.as_str() {
            "generator" => check_generator(cfg)?,
            "flow" => check_flow(cfg)?,
            "subsolution" => check_subsolution(cfg)?,
            "psi-delta" => check_psi_delta(cfg)?,
            "comparison" => check_comparison(cfg)?,
            "truncation" => check_truncation(cfg)?,
            "tree" => check_tree(cfg, tree_file)?,
            other => return Err(Error::InvalidArgument(format!("unknown check {other}; expected one of {}", CHECKS.join(", ")))),
        };
        let secs = start.elapsed().as_secs_f64();
        for r in &reps {
            let diagnostic = DIAGNOSTICS.contains(&r.name.as_str());
            let status = match (r.passed(), diagnostic) {
                (_, true) => "INFO",
                (true, false) => "PASS",
                (false, false) => "FAIL",
            };
            let worst = r.worst().map_or("none".to_string(), |w| {
                format!("point_id={} t={} lhs={} rhs={}", w.point_id, format_f64(w.t), format_f64(w.lhs), format_f64(w.rhs))
            });
            println!(
                "{status} {} records={} worst_slack={} tolerance={} worst=[{worst}] time={secs:.2}s{}",
                r.name,
                r.records.len(),
                format_f64(r.worst_slack()),
                format_f64(r.tolerance),
                r.skipped.as_ref().map_or(String::new(), |s| format!(" skipped={s}"))
            );
            if !diagnostic && !r.passed() {
                failed.push(r.clone());
            }
        }
        reports.extend(reps);
    }
    write_report_csv(&reports, create(cfg, "report.csv")?)?;
    if let Some(first) = failed.first() {
        let w = first.worst();
        eprintln!(
            "check-failed: {} worst point_id={} slack={}",
            first.name,
            w.map_or(0, |w| w.point_id),
            w.map_or("-".into(), |w| format_f64(w.slack))
        );
        return Ok(1);
    }
    Ok(0)
}

pub fn dist(cfg: &ExperimentConfig, a: &Path, b: &Path, elapsed: Option<f64>) -> Result<i32> {
    let grid = cfg.grid()?;
    let mut ma = GridMeasure::read_csv(grid.clone(), File::open(a)?)?;
    let mut mb = GridMeasure::read_csv(grid, File::open(b)?)?;
    if let Some(s) = elapsed {
        ma = heat_evolve(&ma, 0.0, s)?;
        mb = heat_evolve(&mb, 0.0, s)?;
    }
    println!("metric,value");
    println!("w1,{}", format_f64(wasserstein1(&ma, &mb)?));
    println!("w2,{}", format_f64(wasserstein2(&ma, &mb)?));
    println!("tv,{}", format_f64(total_variation(&ma, &mb)?));
    Ok(0)
}
