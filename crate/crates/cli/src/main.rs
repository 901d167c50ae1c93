//! `winfo`: solve, play, check and compare on the belief-lattice model.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{PlayArgs, CHECKS};
use config::{ExperimentConfig, SpecSource};

#[derive(Parser)]
#[command(name = "winfo", version, about = "Value and strategies of zero-sum games with a diffusing hidden state")]
struct Cli {
    /// Worker threads; falls back to WINFO_THREADS, then to the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Built-in payoff name.
    #[arg(long)]
    spec: Option<String>,
    /// Payoff table `t,x,u,v,f`.
    #[arg(long, conflicts_with = "spec")]
    spec_table: Option<PathBuf>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    lattice_res: Option<usize>,
    /// Support positions `x1,x2[,x3]`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    support: Option<Vec<f64>>,
    /// Lattice coordinates of the initial law.
    #[arg(long, value_delimiter = ',')]
    prior: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the value recursion and write value, baseline, plans and convergence tables.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Play a strategy pair exactly or by Monte Carlo.
    Play {
        #[command(flatten)]
        common: Common,
        /// optimal, nonrevealing, fullrevealing or file.
        #[arg(long)]
        sigma: Option<String>,
        /// Tree file for `--sigma file`.
        #[arg(long)]
        sigma_file: Option<PathBuf>,
        /// bestreply, uniform or file.
        #[arg(long)]
        tau: Option<String>,
        /// Pure strategy table `stage,history_code,v` for `--tau file`.
        #[arg(long)]
        tau_file: Option<PathBuf>,
        /// Number of playouts; 0 selects exact enumeration.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Solve first instead of requiring a value table in the output directory.
        #[arg(long)]
        solve_first: bool,
    },
    /// Run check suites and write report.csv.
    Check {
        #[command(flatten)]
        common: Common,
        /// Comma-separated checks, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        which: Vec<String>,
        /// Tree file for `--which tree`; the solver's tree otherwise.
        #[arg(long)]
        tree: Option<PathBuf>,
    },
    /// Distances between two measures given as `x,weight` CSV files.
    Dist {
        #[command(flatten)]
        common: Common,
        a: PathBuf,
        b: PathBuf,
        /// Evolve both measures by the heat flow for this long first.
        #[arg(long)]
        elapsed: Option<f64>,
    },
}

fn load(common: &Common) -> winfo_core::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = &common.spec {
        cfg.spec = SpecSource::Builtin(s.clone());
    }
    if let Some(t) = &common.spec_table {
        cfg.spec = SpecSource::Table(t.clone());
    }
    if let Some(n) = common.n_steps {
        cfg.n_steps = n;
    }
    if let Some(r) = common.lattice_res {
        cfg.resolution = r;
    }
    if let Some(s) = &common.support {
        cfg.support = s.clone();
        if common.prior.is_none() && cfg.prior.len() != s.len() {
            cfg.prior.clear();
        }
    }
    if let Some(p) = &common.prior {
        cfg.prior = p.clone();
    }
    cfg.validate()?;
    cfg.payoff()?;
    Ok(cfg)
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("WINFO_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("invalid-config: WINFO_THREADS={v}")),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> winfo_core::Result<i32> {
    match cli.command {
        Command::Solve { common } => commands::solve(&load(&common)?),
        Command::Play {
            common,
            sigma,
            sigma_file,
            tau,
            tau_file,
            samples,
            seed,
            solve_first,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = sigma {
                cfg.sigma = s;
            }
            if let Some(t) = tau {
                cfg.tau = t;
            }
            if let Some(n) = samples {
                cfg.samples = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let args = PlayArgs {
                solve_first,
                sigma_file,
                tau_file,
            };
            commands::play(&cfg, &args)
        }
        Command::Check { common, which, tree } => {
            let cfg = load(&common)?;
            let which: Vec<String> = if which.iter().any(|w| w == "all") {
                CHECKS.iter().map(|s| s.to_string()).collect()
            } else {
                which
            };
            commands::check(&cfg, &which, tree.as_deref())
        }
        Command::Dist { common, a, b, elapsed } => commands::dist(&load(&common)?, &a, &b, elapsed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match threads(cli.threads) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: invalid-config: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
