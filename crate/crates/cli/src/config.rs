//! Flat `section.key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use winfo_core::measure::SpatialGrid;
use winfo_core::payoff::PayoffSpec;
use winfo_core::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum SpecSource {
    Builtin(String),
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub half_width: f64,
    pub n_points: usize,
    pub start: f64,
    pub end: f64,
    pub spec: SpecSource,
    pub n_steps: usize,
    pub convergence: Vec<usize>,
    pub support: Vec<f64>,
    pub resolution: usize,
    /// Lattice coordinates of the initial law; the barycenter when empty.
    pub prior: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub sigma: String,
    pub tau: String,
    pub budget: usize,
    pub flat_step: f64,
    /// Time step of the flow checks; `|π|/4` when absent.
    pub dt: Option<f64>,
    pub check_samples: usize,
    pub check_seed: u64,
    pub n_quad: usize,
    pub delta: f64,
    pub radius: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            n_points: 257,
            start: 0.0,
            end: 1.0,
            spec: SpecSource::Builtin("matching-pennies-x".into()),
            n_steps: 8,
            convergence: vec![4, 8, 16, 32],
            support: vec![-1.0, 1.0],
            resolution: 25,
            prior: Vec::new(),
            samples: 1000,
            seed: 1,
            sigma: "optimal".into(),
            tau: "bestreply".into(),
            budget: winfo_core::game::DEFAULT_BUDGET,
            flat_step: winfo_core::pde::DEFAULT_FLAT_STEP,
            dt: None,
            check_samples: 200,
            check_seed: 7,
            n_quad: 32,
            delta: 0.05,
            radius: 2.0,
            tolerances: default_tolerances(),
            out_dir: PathBuf::from("out"),
        }
    }
}

pub fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("generator", 1e-3),
        ("flow", 5e-2),
        ("richardson", 0.8),
        ("subsolution", 5e-3),
        ("psi-delta", 1e-6),
        ("comparison", 5e-3),
        ("truncation", 1e-9),
        ("tree", 1e-9),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| bad(format!("invalid-config: {key} = {v}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("invalid-config: line {} has no '='", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "grid.half_width" => self.half_width = parse_num(key, v)?,
            "grid.n_points" => self.n_points = parse_num(key, v)?,
            "time.start" => self.start = parse_num(key, v)?,
            "time.end" => self.end = parse_num(key, v)?,
            "payoff.spec" => self.spec = SpecSource::Builtin(v.to_string()),
            "payoff.table" => self.spec = SpecSource::Table(PathBuf::from(v)),
            "solve.n_steps" => self.n_steps = parse_num(key, v)?,
            "solve.convergence" => self.convergence = parse_list(key, v)?,
            "lattice.support" => self.support = parse_list(key, v)?,
            "lattice.resolution" => self.resolution = parse_num(key, v)?,
            "lattice.prior" => self.prior = parse_list(key, v)?,
            "play.samples" => self.samples = parse_num(key, v)?,
            "play.seed" => self.seed = parse_num(key, v)?,
            "play.sigma" => self.sigma = v.to_string(),
            "play.tau" => self.tau = v.to_string(),
            "play.budget" => self.budget = parse_num(key, v)?,
            "check.flat_step" => self.flat_step = parse_num(key, v)?,
            "check.dt" => self.dt = Some(parse_num(key, v)?),
            "check.samples" => self.check_samples = parse_num(key, v)?,
            "check.seed" => self.check_seed = parse_num(key, v)?,
            "check.n_quad" => self.n_quad = parse_num(key, v)?,
            "check.delta" => self.delta = parse_num(key, v)?,
            "check.radius" => self.radius = parse_num(key, v)?,
            "output.dir" => self.out_dir = PathBuf::from(v),
            _ => match key.strip_prefix("tolerance.") {
                Some(name) if self.tolerances.contains_key(name) => {
                    self.tolerances.insert(name.to_string(), parse_num(key, v)?);
                }
                _ => return Err(bad(format!("invalid-config: unknown key {key}"))),
            },
        }
        Ok(())
    }

    /// Checks the invariants that do not need the payoff spec.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if !(self.start < self.end) {
            return Err(bad("invalid-config: time.start must be below time.end"));
        }
        if self.n_steps < 2 {
            return Err(bad("invalid-config: solve.n_steps must be at least 2"));
        }
        if self.support.is_empty() || self.support.len() > 3 {
            return Err(bad("invalid-config: lattice.support needs 1 to 3 points"));
        }
        for x in &self.support {
            if grid.index_of(*x).is_none() {
                return Err(bad(format!("invalid-config: support point {x} is not a grid node")));
            }
        }
        if !self.prior.is_empty() && self.prior.len() != self.support.len() {
            return Err(bad("invalid-config: lattice.prior must have one coordinate per support point"));
        }
        if self.convergence.windows(2).any(|w| w[1] <= w[0]) || self.convergence.contains(&0) {
            return Err(bad("invalid-config: solve.convergence must increase"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<std::sync::Arc<SpatialGrid>> {
        SpatialGrid::shared(self.half_width, self.n_points)
    }

    pub fn payoff(&self) -> Result<PayoffSpec> {
        match &self.spec {
            SpecSource::Builtin(name) => PayoffSpec::builtin(name, self.half_width, (self.start, self.end)),
            SpecSource::Table(path) => PayoffSpec::from_table_file(path, (self.start, self.end)),
        }
    }

    pub fn prior_coords(&self) -> Vec<f64> {
        if self.prior.is_empty() {
            vec![1.0 / self.support.len() as f64; self.support.len()]
        } else {
            self.prior.clone()
        }
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Canonical `key = value` listing; the hash is taken over it.
    pub fn canonical(&self) -> String {
        let spec = match &self.spec {
            SpecSource::Builtin(n) => format!("payoff.spec = {n}"),
            SpecSource::Table(p) => format!("payoff.table = {}", p.display()),
        };
        let mut lines = vec![
            format!("grid.half_width = {}", self.half_width),
            format!("grid.n_points = {}", self.n_points),
            format!("time.start = {}", self.start),
            format!("time.end = {}", self.end),
            spec,
            format!("solve.n_steps = {}", self.n_steps),
            format!("solve.convergence = {}", join(&self.convergence)),
            format!("lattice.support = {}", join(&self.support)),
            format!("lattice.resolution = {}", self.resolution),
            format!("lattice.prior = {}", join(&self.prior_coords())),
            format!("play.samples = {}", self.samples),
            format!("play.seed = {}", self.seed),
            format!("play.sigma = {}", self.sigma),
            format!("play.tau = {}", self.tau),
            format!("play.budget = {}", self.budget),
            format!("check.flat_step = {}", self.flat_step),
            format!("check.dt = {}", self.dt.map_or("auto".to_string(), |d| d.to_string())),
            format!("check.samples = {}", self.check_samples),
            format!("check.seed = {}", self.check_seed),
            format!("check.n_quad = {}", self.n_quad),
            format!("check.delta = {}", self.delta),
            format!("check.radius = {}", self.radius),
        ];
        lines.extend(self.tolerances.iter().map(|(k, v)| format!("tolerance.{k} = {v}")));
        lines.join("\n") + "\n"
    }

    pub fn hash(&self) -> String {
        short_hash(&self.canonical())
    }

    /// Hash of the keys that determine the value table.
    pub fn solve_hash(&self) -> String {
        let keys = ["grid.", "time.", "payoff.", "solve.", "lattice.support", "lattice.resolution"];
        let canonical = self.canonical();
        let lines: Vec<&str> = canonical.lines().filter(|l| keys.iter().any(|k| l.starts_with(k))).collect();
        short_hash(&lines.join("\n"))
    }

    /// First line of every output file.
    pub fn header(&self) -> String {
        format!("# config_hash={} version={}\n", self.hash(), VERSION)
    }
}

fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
}
