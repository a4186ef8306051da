use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("non-finite value in {context} at theta = {theta:?}")]
    NumericDomain { context: String, theta: Vec<f64> },

    #[error("complex exponential overflow (|Re| = {real_part:e} > 700) at observation {observation}")]
    Overflow { observation: usize, real_part: f64 },

    #[error("bread matrix is singular (condition number {condition:e})")]
    SingularBread { condition: f64 },

    #[error("corrected-score integral diverges: 1 + 2*sigma2*b1 = {value:e} <= 0")]
    DivergentCorrection { value: f64 },

    #[error("measurement error variance for exposure `{exposure}` exceeds the residual variance (corrected variance {value:e})")]
    InfeasibleErrorVariance { exposure: String, value: f64 },

    #[error("collinear design: {0}")]
    Collinearity(String),

    #[error("replicate data has no subject with at least two measurements")]
    InsufficientReplicates,

    #[error("two-phase stratum `{0}` has members but none were selected")]
    DegenerateStratum(String),

    #[error("SIMEX refit failed at lambda = {lambda}, replicate {replicate}: {source}")]
    SimexFailure {
        lambda: f64,
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model specification: {0}")]
    Specification(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{estimator}: {source}")]
    Estimator {
        estimator: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>, theta: &[f64]) -> Self {
        Error::NumericDomain {
            context: context.into(),
            theta: theta.to_vec(),
        }
    }

    pub(crate) fn in_estimator(self, estimator: impl Into<String>) -> Self {
        Error::Estimator {
            estimator: estimator.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by the numerics of a fit rather than by the
    /// inputs; the CLI maps these to exit code 2.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericDomain { .. }
            | Error::Overflow { .. }
            | Error::SingularBread { .. }
            | Error::DivergentCorrection { .. }
            | Error::InfeasibleErrorVariance { .. }
            | Error::SimexFailure { .. } => true,
            Error::Estimator { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
