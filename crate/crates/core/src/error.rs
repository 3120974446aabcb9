//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the clustering, allocation, and backtesting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("panel has {0} rows, need at least 2")]
    TooFewRows(usize),

    #[error("column {0} is constant (zero variance)")]
    ConstantColumn(String),

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("tail fit degenerate for coordinate {coord}: {reason}")]
    DegenerateFit { coord: usize, reason: String },

    #[error("no grid threshold yields a cluster count in [{k_min}, {k_max}]")]
    NoFeasibleThreshold { k_min: usize, k_max: usize },

    #[error("invalid blockmodel spec: {0}")]
    InvalidSpec(String),

    #[error("partitions/matrices disagree in dimension: {0}")]
    DimensionMismatch(String),

    #[error("tolerance relation is not transitive: assets {0} and {1} linked only indirectly")]
    NotTransitive(usize, usize),

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("target return {target} exceeds best available mean return {best}")]
    Infeasible { target: f64, best: f64 },

    #[error("market return series has zero variance")]
    ZeroMarketVariance,

    #[error("portfolio beta {0} gives non-positive leverage scale 1+beta")]
    DegenerateBeta(f64),

    #[error("portfolio beta {0} is negative; hedged weights would not sum to one")]
    NegativeBeta(f64),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("dates are not strictly increasing near line {0}")]
    NonMonotoneDates(usize),

    #[error("series for {0} has no observed values")]
    AllMissing(String),

    #[error("not enough history before the first rebalance date ({0})")]
    InsufficientHistory(String),

    #[error("no window of the requested length fits in the series")]
    NoValidWindows,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
