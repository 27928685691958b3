use thiserror::Error;

/// Errors raised by chain construction and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state space must contain at least one state")]
    EmptyStateSpace,
    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("state index {index} out of range for {size} states")]
    StateOutOfRange { index: usize, size: usize },
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NonSquare { row: usize, len: usize, expected: usize },
    #[error("{labels} labels supplied for a {size}x{size} matrix")]
    LabelCount { labels: usize, size: usize },
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum} (worst row), outside tolerance {tolerance}")]
    RowSumOutOfTolerance { row: usize, sum: f64, tolerance: f64 },
    #[error("probabilities sum to {sum}, outside tolerance {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("operands live on different state spaces")]
    SpaceMismatch,
    #[error("distribution is not stationary: residual {residual:e}")]
    NotStationary { residual: f64 },
    #[error("state {0:?} lies on no closed walk")]
    NoClosedWalk(String),
    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),
    #[error("chain is not irreducible")]
    NotIrreducible,
    #[error("matrix has a zero entry; lift to a positive power first")]
    NotPositive,
    #[error("envelope of column {column} lost monotonicity at iteration {iteration}")]
    MonotonicityViolation { column: usize, iteration: usize },
    #[error("no convergence after {iterations} iterations (last gap {last_delta:e})")]
    MaxIterExceeded { iterations: usize, last_delta: f64 },
    #[error("rank of P - I is {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("{n} states exceed the enumeration cap {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("balance condition fails at state {state} (relative error {relative:e})")]
    BalanceViolation { state: usize, relative: f64 },
    #[error("linear system is singular (pivot {pivot:e})")]
    SingularSystem { pivot: f64 },
    #[error("return-time identity fails at state {state}: pi * E[tau+] = {product}")]
    ReturnTimeMismatch { state: usize, product: f64 },
    #[error("paths never meet")]
    NeverMet,
    #[error("paths have different lengths ({x} vs {y})")]
    PathLength { x: usize, y: usize },
    #[error("every one of {0} coupling runs hit the step cap")]
    Truncated(usize),
    #[error("iteration did not converge (last estimate {estimate})")]
    NoConvergence { estimate: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
