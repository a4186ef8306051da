//! TOML run configuration for `fit` and `sensitivity`.
//!
//! ```toml
//! seed = 2024
//! input = "cohort.csv"
//!
//! [columns]
//! outcome = "y"
//! covariates = ["l1", "l2"]
//! exposures = ["a"]
//!
//! [sigma]
//! matrix = [[0.02]]
//!
//! [[estimator]]
//! method = "dr"
//! correction = "cs"
//! contrasts = [[1, 0]]
//! grid = { points = [[0.0], [1.0]] }
//! outcome = { terms = [[{ exposure = "a" }], [{ covariate = "l1" }]] }
//! propensity = [{ exposure = "a", terms = [[{ covariate = "l1" }]] }]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{read_csv, ColumnRoles, Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::estimators::{
    apply_two_phase, estimate_me_covariance, Correction, EstimatorRequest, MccsOptions, Method, Propensity,
    SimexOptions,
};
use crate::models::{ModelSpec, PropensitySpec};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Data file, relative to the config file.
    pub input: PathBuf,
    pub columns: ColumnRoles,
    pub sigma: SigmaSource,
    #[serde(rename = "estimator")]
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Used when neither `--out` nor the default applies.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_alpha() -> f64 {
    0.05
}

/// Exactly one of the three fields must be set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSource {
    /// Literal `m × m` matrix.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub replicates: Option<ReplicateSource>,
    #[serde(default)]
    pub grid: Option<SigmaGrid>,
}

/// Σ estimated from a file of repeated exposure measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateSource {
    pub input: PathBuf,
    /// Subject identifier column.
    pub group: String,
    /// Defaults to the exposure columns of the main data.
    #[serde(default)]
    pub exposures: Option<Vec<String>>,
    #[serde(default)]
    pub diagonal: bool,
}

/// `scale · base` for every scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaGrid {
    pub base: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub method: Method,
    #[serde(default = "default_correction")]
    pub correction: Correction,
    #[serde(default)]
    pub outcome: Option<ModelSpec>,
    #[serde(default)]
    pub msm: Option<ModelSpec>,
    #[serde(default)]
    pub propensity: Vec<PropensitySpec>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub contrasts: Vec<(usize, usize)>,
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub mccs: MccsOptions,
    #[serde(default)]
    pub simex: SimexOptions,
}

fn default_correction() -> Correction {
    Correction::Cs
}

/// Explicit points, or `size` evenly spaced points from `lower` to `upper`.
/// Missing bounds default to the 5th and 95th percentiles of each observed
/// exposure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
    #[serde(default)]
    pub size: Option<usize>,
}

pub const DEFAULT_GRID_SIZE: usize = 41;

/// A parsed config together with the raw bytes it was read from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let raw = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text =
        String::from_utf8(raw.clone()).map_err(|_| Error::Config(format!("{} is not valid UTF-8", path.display())))?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(LoadedConfig {
        config,
        sha256: super::sha256_hex(&raw),
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        let s = &self.sigma;
        let sources = [s.matrix.is_some(), s.replicates.is_some(), s.grid.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        if sources != 1 {
            return Err(Error::Config(format!(
                "[sigma] needs exactly one of `matrix`, `replicates` or `grid` ({sources} given)"
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no [[estimator]] tables".into()));
        }
        if let Some(g) = &s.grid {
            if g.scales.is_empty() {
                return Err(Error::Config("[sigma.grid] scales is empty".into()));
            }
            if let Some(bad) = g.scales.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::Config(format!(
                    "[sigma.grid] scale {bad} must be finite and non-negative"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads the input, applying two-phase weights when the case and
    /// selection columns are both mapped.
    pub fn dataset(&self, dir: &Path) -> Result<Dataset> {
        let data = read_csv(&dir.join(&self.input), &self.columns)?;
        if data.case_indicator().is_some() && data.selected().is_some() {
            apply_two_phase(&data)
        } else {
            Ok(data)
        }
    }

    /// The single Σ for `fit`.
    pub fn sigma(&self, dir: &Path, data: &Dataset) -> Result<MeCovariance> {
        let s = &self.sigma;
        if let Some(rows) = &s.matrix {
            return MeCovariance::from_rows(rows);
        }
        if let Some(rep) = &s.replicates {
            let names = rep.exposures.clone().unwrap_or_else(|| self.columns.exposures.clone());
            if names.len() != data.m() {
                return Err(Error::Config(format!(
                    "[sigma.replicates] lists {} exposures, data has {}",
                    names.len(),
                    data.m()
                )));
            }
            let roles = ColumnRoles {
                outcome: rep.group.clone(),
                exposures: names,
                replicate_group: Some(rep.group.clone()),
                ..ColumnRoles::default()
            };
            // the group column doubles as the unused outcome
            let replicates = read_csv(&dir.join(&rep.input), &roles)?;
            return estimate_me_covariance(&replicates, rep.diagonal);
        }
        Err(Error::Config(
            "`fit` needs [sigma] matrix or replicates; use `sensitivity` for a grid".into(),
        ))
    }

    /// `(scale, Σ)` for `sensitivity`.
    pub fn sigma_grid(&self) -> Result<Vec<(f64, MeCovariance)>> {
        let g = self
            .sigma
            .grid
            .as_ref()
            .ok_or_else(|| Error::Config("`sensitivity` needs a [sigma.grid] table".into()))?;
        let base = MeCovariance::from_rows(&g.base)?;
        g.scales.iter().map(|&s| Ok((s, base.scaled(s)?))).collect()
    }

    /// Requests in config order, each with its own derived seed.
    pub fn requests(&self, data: &Dataset) -> Result<Vec<(String, EstimatorRequest)>> {
        self.estimators
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let req = e.request(
                    data,
                    self.alpha,
                    rng::derive_seed(self.seed, &[rng::purpose::MISC, i as u64]),
                )?;
                let label = e.label.clone().unwrap_or_else(|| req.name());
                Ok((label, req))
            })
            .collect()
    }
}

impl EstimatorConfig {
    fn request(&self, data: &Dataset, alpha: f64, seed: u64) -> Result<EstimatorRequest> {
        let missing = |what: &str| Error::Config(format!("{} estimator needs `{what}`", self.method));
        let ps = Propensity::Estimated(self.propensity.clone());
        let mut req = match self.method {
            Method::Gformula => {
                EstimatorRequest::gformula(self.outcome.clone().ok_or_else(|| missing("outcome"))?, Vec::new())
            }
            Method::Ipw => EstimatorRequest::ipw(self.msm.clone().ok_or_else(|| missing("msm"))?, ps),
            Method::Dr => {
                let mut r =
                    EstimatorRequest::dr(self.outcome.clone().ok_or_else(|| missing("outcome"))?, ps, Vec::new());
                r.msm = self.msm.clone();
                r
            }
        };
        req.grid = match (&self.grid, self.method) {
            (Some(g), _) => g.points(data)?,
            (None, Method::Ipw) => Vec::new(),
            (None, _) => GridConfig::default().points(data)?,
        };
        req.correction = self.correction;
        req.contrasts = self.contrasts.clone();
        req.truncation = self.truncation;
        req.mccs = self.mccs.clone();
        req.simex = self.simex.clone();
        req.seed = seed;
        req.alpha = alpha;
        Ok(req)
    }
}

impl GridConfig {
    pub fn points(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        if let Some(p) = &self.points {
            if self.lower.is_some() || self.upper.is_some() || self.size.is_some() {
                return Err(Error::Config(
                    "grid takes either `points` or `lower`/`upper`/`size`".into(),
                ));
            }
            return Ok(p.clone());
        }
        let m = data.m();
        let bound = |given: &Option<Vec<f64>>, q: f64| -> Result<Vec<f64>> {
            match given {
                Some(v) if v.len() == m => Ok(v.clone()),
                Some(v) => Err(Error::Config(format!("grid bound {v:?} needs {m} values"))),
                None => Ok((0..m).map(|j| quantile(data.exposure_column(j), q)).collect()),
            }
        };
        let lower = bound(&self.lower, 0.05)?;
        let upper = bound(&self.upper, 0.95)?;
        let size = self.size.unwrap_or(DEFAULT_GRID_SIZE);
        if size < 2 {
            return Err(Error::Config("grid size must be at least 2".into()));
        }
        Ok((0..size)
            .map(|k| {
                let t = k as f64 / (size - 1) as f64;
                lower.iter().zip(&upper).map(|(lo, hi)| lo + t * (hi - lo)).collect()
            })
            .collect())
    }
}

/// Linear-interpolation sample quantile.
fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}
