//! Immutable data containers and parameter bookkeeping.

mod covariance;
pub mod ingest;
mod params;

pub use covariance::{factor_me_covariance, MeCovariance};
pub use ingest::{read_csv, read_csv_from, ColumnRoles};
pub use params::{FitResult, ParamBlock, ParameterVector};

use crate::error::{Error, Result};

/// Outcome, covariates and measured exposures for `n` observations.
///
/// Covariates and exposures are stored row-major so a single observation can
/// be handed to an estimating function as a slice.
#[derive(Clone, Debug)]
pub struct Dataset {
    y: Vec<f64>,
    covariate_names: Vec<String>,
    covariates: Vec<f64>,
    exposure_names: Vec<String>,
    exposures: Vec<f64>,
    sample_weight: Option<Vec<f64>>,
    case_indicator: Option<Vec<bool>>,
    selected: Option<Vec<bool>>,
    replicate_group: Option<Vec<i64>>,
}

#[derive(Default, Debug, Clone)]
pub struct DatasetBuilder {
    y: Option<Vec<f64>>,
    covariates: Vec<(String, Vec<f64>)>,
    exposures: Vec<(String, Vec<f64>)>,
    sample_weight: Option<Vec<f64>>,
    case_indicator: Option<Vec<bool>>,
    selected: Option<Vec<bool>>,
    replicate_group: Option<Vec<i64>>,
}

impl DatasetBuilder {
    pub fn outcome(mut self, y: Vec<f64>) -> Self {
        self.y = Some(y);
        self
    }

    pub fn covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.covariates.push((name.into(), values));
        self
    }

    pub fn exposure(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.exposures.push((name.into(), values));
        self
    }

    pub fn sample_weight(mut self, w: Vec<f64>) -> Self {
        self.sample_weight = Some(w);
        self
    }

    pub fn case_indicator(mut self, c: Vec<bool>) -> Self {
        self.case_indicator = Some(c);
        self
    }

    pub fn selected(mut self, s: Vec<bool>) -> Self {
        self.selected = Some(s);
        self
    }

    pub fn replicate_group(mut self, g: Vec<i64>) -> Self {
        self.replicate_group = Some(g);
        self
    }

    pub fn build(self) -> Result<Dataset> {
        let y = self
            .y
            .ok_or_else(|| Error::Data("dataset has no outcome column".into()))?;
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("outcome contains missing or non-finite values".into()));
        }
        let mut names = std::collections::HashSet::new();
        for (name, col) in self.covariates.iter().chain(self.exposures.iter()) {
            if !names.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate column name `{name}`")));
            }
            if col.len() != n {
                return Err(Error::Dimension(format!(
                    "column `{name}` has {} rows, outcome has {n}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "column `{name}` contains missing or non-finite values"
                )));
            }
        }
        if self.exposures.is_empty() {
            return Err(Error::Data("dataset needs at least one exposure".into()));
        }
        if let Some(w) = &self.sample_weight {
            if w.len() != n {
                return Err(Error::Dimension("sample_weight length differs from n".into()));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Data("sample weights must be finite and >= 0".into()));
            }
            if !w.iter().any(|v| *v > 0.0) {
                return Err(Error::Data("at least one sample weight must be positive".into()));
            }
        }
        for (what, len) in [
            ("case_indicator", self.case_indicator.as_ref().map(Vec::len)),
            ("selected", self.selected.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != n {
                    return Err(Error::Dimension(format!("{what} length differs from n")));
                }
            }
        }
        if let Some(g) = &self.replicate_group {
            if g.len() != n {
                return Err(Error::Dimension("replicate_group length differs from n".into()));
            }
        }

        let p = self.covariates.len();
        let m = self.exposures.len();
        let mut covariates = vec![0.0; n * p];
        for (j, (_, col)) in self.covariates.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                covariates[i * p + j] = *v;
            }
        }
        let mut exposures = vec![0.0; n * m];
        for (j, (_, col)) in self.exposures.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                exposures[i * m + j] = *v;
            }
        }
        Ok(Dataset {
            y,
            covariate_names: self.covariates.into_iter().map(|c| c.0).collect(),
            covariates,
            exposure_names: self.exposures.into_iter().map(|c| c.0).collect(),
            exposures,
            sample_weight: self.sample_weight,
            case_indicator: self.case_indicator,
            selected: self.selected,
            replicate_group: self.replicate_group,
        })
    }
}

impl Dataset {
    pub fn builder() -> DatasetBuilder {
        DatasetBuilder::default()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariates.
    #[inline]
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    /// Number of exposures.
    #[inline]
    pub fn m(&self) -> usize {
        self.exposure_names.len()
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn covariate_row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.covariates[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn exposure_row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.exposures[i * m..(i + 1) * m]
    }

    pub fn covariate_column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.covariate_row(i)[j]).collect()
    }

    pub fn exposure_column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.exposure_row(i)[j]).collect()
    }

    /// Row-major `n x m` exposure values.
    pub fn exposures(&self) -> &[f64] {
        &self.exposures
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn exposure_names(&self) -> &[String] {
        &self.exposure_names
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn exposure_index(&self, name: &str) -> Option<usize> {
        self.exposure_names.iter().position(|c| c == name)
    }

    /// Observation weight; 1 when no sample weights are attached.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.sample_weight.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn sample_weight(&self) -> Option<&[f64]> {
        self.sample_weight.as_deref()
    }

    pub fn case_indicator(&self) -> Option<&[bool]> {
        self.case_indicator.as_deref()
    }

    pub fn selected(&self) -> Option<&[bool]> {
        self.selected.as_deref()
    }

    pub fn replicate_group(&self) -> Option<&[i64]> {
        self.replicate_group.as_deref()
    }

    /// Copy of the dataset with the exposure matrix replaced (row-major
    /// `n x m`). Used for oracle fits, regression calibration and SIMEX.
    pub fn with_exposures(&self, exposures: Vec<f64>) -> Result<Dataset> {
        if exposures.len() != self.exposures.len() {
            return Err(Error::Dimension(format!(
                "replacement exposures have {} values, expected {}",
                exposures.len(),
                self.exposures.len()
            )));
        }
        if exposures.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("replacement exposures contain non-finite values".into()));
        }
        Ok(Dataset {
            exposures,
            ..self.clone()
        })
    }

    pub fn with_sample_weight(&self, w: Vec<f64>) -> Result<Dataset> {
        let mut b = self.to_builder();
        b.sample_weight = Some(w);
        b.build()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mut b = Dataset::builder().outcome(pick(&self.y));
        for j in 0..self.p() {
            b = b.covariate(self.covariate_names[j].clone(), pick(&self.covariate_column(j)));
        }
        for j in 0..self.m() {
            b = b.exposure(self.exposure_names[j].clone(), pick(&self.exposure_column(j)));
        }
        if let Some(w) = &self.sample_weight {
            b = b.sample_weight(pick(w));
        }
        if let Some(c) = &self.case_indicator {
            b = b.case_indicator(rows.iter().map(|&i| c[i]).collect());
        }
        if let Some(s) = &self.selected {
            b = b.selected(rows.iter().map(|&i| s[i]).collect());
        }
        if let Some(g) = &self.replicate_group {
            b = b.replicate_group(rows.iter().map(|&i| g[i]).collect());
        }
        b.build()
    }

    fn to_builder(&self) -> DatasetBuilder {
        let mut b = Dataset::builder().outcome(self.y.clone());
        for j in 0..self.p() {
            b = b.covariate(self.covariate_names[j].clone(), self.covariate_column(j));
        }
        for j in 0..self.m() {
            b = b.exposure(self.exposure_names[j].clone(), self.exposure_column(j));
        }
        b.sample_weight = self.sample_weight.clone();
        b.case_indicator = self.case_indicator.clone();
        b.selected = self.selected.clone();
        b.replicate_group = self.replicate_group.clone();
        b
    }

    /// Sample variance (n - 1 denominator) of each measured exposure.
    pub fn exposure_variances(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.m())
            .map(|j| {
                let col = self.exposure_column(j);
                let mean = col.iter().sum::<f64>() / n;
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            })
            .collect()
    }
}
