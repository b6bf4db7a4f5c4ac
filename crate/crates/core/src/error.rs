use thiserror::Error;

/// Broad classes of failure, used by front ends to pick exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Configuration,
    Numeric,
    StatisticalPower,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("unsupported sampler: {0}")]
    UnsupportedSampler(String),

    #[error("quadrature did not converge on [{lo}, {hi}]: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("ill-conditioned solve: condition estimate {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("monotonicity violated at iteration {iteration}, node {node} (theta too small?)")]
    Monotonicity { iteration: usize, node: usize },

    #[error("lambda {lambda} is within {distance:e} of the spectrum")]
    SpectralProximity { lambda: f64, distance: f64 },

    #[error("subsolution construction failed: {0}")]
    Construction(String),

    #[error("continuation failed at c = {c}: {reason}")]
    Continuation { c: f64, reason: String },

    #[error("scan: existence predicate not monotone at c = ({0}, {1}, {2})")]
    ScanNotMonotone(f64, f64, f64),

    #[error("oracle domain: {0}")]
    OracleDomain(String),

    #[error("statistical power: {0}")]
    StatisticalPower(String),

    #[error("no snapshot recorded at s = {0}")]
    MissingSnapshot(f64),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::Dimension { .. }
            | Error::UnsupportedKernel(_)
            | Error::UnsupportedSampler(_)
            | Error::OracleDomain(_)
            | Error::MissingSnapshot(_) => ErrorClass::Configuration,
            Error::StatisticalPower(_) => ErrorClass::StatisticalPower,
            _ => ErrorClass::Numeric,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
