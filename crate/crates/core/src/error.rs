use thiserror::Error;

/// Errors raised by theory solvers, simulators and parsers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("heritability {0} outside (0, 1)")]
    HeritabilityOutOfRange(f64),
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("operation requires {0}")]
    Unsupported(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no convergence after {max_iter} iterations (residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("root is not bracketed on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("infeasible regime: {0}")]
    InfeasibleRegime(String),
    #[error("alpha {alpha} is not above alpha_min {alpha_min}")]
    AlphaBelowMin { alpha: f64, alpha_min: f64 },
    #[error("value {0} out of range")]
    OutOfRange(f64),
    #[error("ridge state evolution has no positive rho (1 - gamma_w * a = {0:e})")]
    NonPositiveRho(f64),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("dimension too small: {0}")]
    DimensionTooSmall(String),
    #[error("iterate diverged at t = {0}")]
    Diverged(usize),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("replicate {index}: {source}")]
    Replicate { index: usize, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
