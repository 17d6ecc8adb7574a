use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("SVD backend failed: {0}")]
    Decomposition(String),

    #[error("penalty out of domain: lambda = {lambda}, expected {expected}")]
    Domain { lambda: f64, expected: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "(r2, sigma2) not identifiable: a_i/b_i spread {spread:e} across the grid, \
         only r2*a + sigma2*b is estimable"
    )]
    Identifiability { spread: f64 },

    #[error("GCV denominator vanishes at lambda = {lambda}: Tr(S) = {trace} >= n = {n}")]
    Divergence { lambda: f64, trace: f64, n: usize },

    #[error("degenerate leverage at row {index}: (S)_ii = {leverage}")]
    DegenerateLeverage { index: usize, leverage: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible signal: aligned mass {aligned_mass} exceeds requested r2 = {r2}")]
    InfeasibleSignal { aligned_mass: f64, r2: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric evaluation failed at lambda = {lambda}: {source}")]
    MetricAt {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::Decomposition(_) => "decomposition",
            Error::Domain { .. } => "domain",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Identifiability { .. } => "identifiability",
            Error::Divergence { .. } => "divergence",
            Error::DegenerateLeverage { .. } => "degenerate_leverage",
            Error::Degenerate(_) => "degenerate",
            Error::InfeasibleSignal { .. } => "infeasible_signal",
            Error::Config(_) => "config",
            Error::MetricAt { .. } => "metric",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn require_positive(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { lambda, expected: "lambda > 0" })
    }
}

pub(crate) fn require_nonnegative(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { lambda, expected: "lambda >= 0" })
    }
}
