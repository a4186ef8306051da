//! Corrected-score causal estimators for continuous exposures measured with
//! classical additive error.
//!
//! The crate is organised bottom-up:
//!
//! - [`complex`]: the small complex arithmetic kernel used to evaluate scores at
//!   `A* + iε̃`.
//! - [`data`]: datasets, the measurement-error covariance and parameter bookkeeping.
//! - [`mestim`]: a generic M-estimation engine (stacked estimating equations,
//!   damped Newton, sandwich and bias-corrected variances, Wald intervals,
//!   delta method).
//! - [`cscore`]: perturbation banks, the Monte-Carlo corrected-score transform
//!   and the closed-form corrected IPW score.
//! - [`models`]: outcome models, marginal structural models and normal
//!   propensity densities.
//! - [`estimators`]: g-formula, IPW and doubly-robust estimators with oracle,
//!   naive, corrected-score, regression-calibration and SIMEX variants.
//! - [`simlab`]: data generators, the replicate runner and metric tables.
//! - [`cli`]: config-driven command line surface used by the `cscausal` binary.

pub mod cli;
pub mod complex;
pub mod cscore;
pub mod data;
pub mod error;
pub mod estimators;
pub mod mestim;
pub mod models;
pub mod rng;
pub mod simlab;

pub use complex::Complex;
pub use data::{Dataset, FitResult, MeCovariance, ParameterVector};
pub use error::{Error, Result};
