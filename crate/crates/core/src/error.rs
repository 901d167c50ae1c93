use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("measures live on different grids")]
    GridMismatch,
    #[error("elapsed time must be positive, got {0}")]
    NonPositiveElapsed(f64),
    #[error("backward evolution requested: s = {s} < t = {t}")]
    BackwardTime { t: f64, s: f64 },
    #[error("truncation radius {0} outside (0, L]")]
    InvalidRadius(f64),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("time {t} outside horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("projection failure: {0}")]
    ProjectionFailure(String),
    #[error("invalid tree at node {node}: {reason}")]
    InvalidTree { node: usize, reason: String },
    #[error("partition mismatch")]
    PartitionMismatch,
    #[error("zero prior mass at grid node {0}")]
    ZeroMass(usize),
    #[error("zero-probability observation: {0}")]
    ZeroProbability(String),
    #[error("enumeration budget exceeded: {needed} states needed, cap {cap}")]
    BudgetExceeded { needed: usize, cap: usize },
    #[error("unknown-spec: {0}")]
    UnknownSpec(String),
    #[error("invalid payoff spec: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
