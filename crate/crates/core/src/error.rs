use thiserror::Error;

/// Errors produced by log ingestion, estimation, and interval construction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("propensity violation at t={t}: {detail}")]
    PropensityViolation { t: u64, detail: String },

    #[error("reward bound violation at t={t}: |{reward}| exceeds declared bound {bound}")]
    RewardBoundViolation { t: u64, reward: f64, bound: f64 },

    #[error("order violation: expected round t={expected}, got t={got}")]
    OrderViolation { expected: u64, got: u64 },

    #[error("parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },

    #[error("schema error at line {line}: missing field `{field}`")]
    SchemaError { line: usize, field: String },

    #[error("estimator state is empty (no rounds observed)")]
    EmptyState,

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("missing bound: {0}")]
    MissingBound(String),

    #[error("bracket error: {0}")]
    BracketError(String),

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("config error: {0}")]
    ConfigError(String),
}

pub type Result<T> = std::result::Result<T, Error>;
