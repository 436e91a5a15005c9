use thiserror::Error;

/// Errors produced by grid construction, solvers and learners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid rate schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A population statistic was requested that the configured mean-field
    /// mode does not track (e.g. the action marginal in state-marginal mode).
    #[error("mean-field estimate does not track the {0}")]
    MissingMarginal(&'static str),

    #[error("singular Riccati denominator at t = {t}")]
    SingularRiccati { t: f64 },

    #[error("unsupported parameter regime: {0}")]
    ParameterRegime(String),

    #[error("policy space too large: {cardinality} feedback policies exceeds cap {cap}")]
    SearchSpaceTooLarge { cardinality: f64, cap: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
