//! G-formula, IPW and doubly-robust estimators with oracle, naive,
//! corrected-score, regression-calibration and SIMEX variants.
//!
//! Every estimator is one stacked estimating equation solved jointly, so the
//! sandwich covers the nuisance models and the dose-response grid:
//!
//! - g-formula: `[β, η(a_1..a_G)]`
//! - IPW: `[γ, propensity parameters]`
//! - DR: `[β, η(a_1..a_G), propensity parameters]`

mod auxiliary;
mod blocks;
mod comparators;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use auxiliary::{apply_two_phase, estimate_me_covariance, sensitivity_grid, two_phase_weights};
pub use comparators::{quadratic_extrapolate, rc_impute, simex_fit};

use crate::cscore::{mccs_transform, observation_keys, real_score, PerturbationBank};
use crate::data::{Dataset, FitResult, MeCovariance, ParameterVector};
use crate::error::{Error, Result};
use crate::mestim::{self, EquationBlock, SolveOptions, Stack};
use crate::models::{fit_propensity, weight_quantile, Link, ModelSpec, OutcomeModel, PropensityModel, PropensitySpec};
use crate::rng;
use blocks::{RegressionScore, Standardization, Weighting};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gformula,
    Ipw,
    Dr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Oracle,
    Naive,
    Cs,
    Rc,
    Simex,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gformula => "gformula",
            Method::Ipw => "ipw",
            Method::Dr => "dr",
        })
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correction::Oracle => "oracle",
            Correction::Naive => "naive",
            Correction::Cs => "cs",
            Correction::Rc => "rc",
            Correction::Simex => "simex",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gformula" => Ok(Method::Gformula),
            "ipw" => Ok(Method::Ipw),
            "dr" => Ok(Method::Dr),
            _ => Err(Error::Argument(format!("unknown method `{s}` (gformula, ipw, dr)"))),
        }
    }
}

impl FromStr for Correction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Correction::Oracle),
            "naive" => Ok(Correction::Naive),
            "cs" => Ok(Correction::Cs),
            "rc" => Ok(Correction::Rc),
            "simex" => Ok(Correction::Simex),
            _ => Err(Error::Argument(format!(
                "unknown correction `{s}` (oracle, naive, cs, rc, simex)"
            ))),
        }
    }
}

/// Monte-Carlo corrected-score settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MccsOptions {
    /// Perturbations per observation.
    #[serde(default = "default_b")]
    pub replicates: usize,
    #[serde(default = "yes")]
    pub antithetic: bool,
}

fn default_b() -> usize {
    32
}

fn yes() -> bool {
    true
}

impl Default for MccsOptions {
    fn default() -> Self {
        MccsOptions {
            replicates: default_b(),
            antithetic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimexOptions {
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_simex_b")]
    pub replicates: usize,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}

fn default_simex_b() -> usize {
    100
}

impl Default for SimexOptions {
    fn default() -> Self {
        SimexOptions {
            lambdas: default_lambdas(),
            replicates: default_simex_b(),
        }
    }
}

/// Source of the stabilized weights for IPW and DR.
#[derive(Clone, Debug, PartialEq)]
pub enum Propensity {
    /// Normal models fitted jointly in the stack.
    Estimated(Vec<PropensitySpec>),
    /// Weights with fixed, known parameters; no propensity rows are stacked.
    Known(PropensityModel),
}

/// Everything that defines one fit apart from the data and `Σ`.
#[derive(Clone, Debug)]
pub struct EstimatorRequest {
    pub method: Method,
    pub correction: Correction,
    pub outcome: Option<ModelSpec>,
    pub msm: Option<ModelSpec>,
    pub propensity: Propensity,
    /// Exposure points (length `m` each) for the dose-response curve.
    pub grid: Vec<Vec<f64>>,
    /// Pairs of grid indices `(g, h)` for `η(a_g) - η(a_h)`.
    pub contrasts: Vec<(usize, usize)>,
    pub seed: u64,
    pub mccs: MccsOptions,
    pub simex: SimexOptions,
    /// Cap real stabilized weights at this quantile of their fitted values.
    pub truncation: Option<f64>,
    pub solver: SolveOptions,
    pub alpha: f64,
}

impl EstimatorRequest {
    fn base(method: Method) -> Self {
        EstimatorRequest {
            method,
            correction: Correction::Naive,
            outcome: None,
            msm: None,
            propensity: Propensity::Estimated(Vec::new()),
            grid: Vec::new(),
            contrasts: Vec::new(),
            seed: 0,
            mccs: MccsOptions::default(),
            simex: SimexOptions::default(),
            truncation: None,
            solver: SolveOptions::default(),
            alpha: 0.05,
        }
    }

    pub fn gformula(outcome: ModelSpec, grid: Vec<Vec<f64>>) -> Self {
        EstimatorRequest {
            outcome: Some(outcome),
            grid,
            ..Self::base(Method::Gformula)
        }
    }

    pub fn ipw(msm: ModelSpec, propensity: Propensity) -> Self {
        EstimatorRequest {
            msm: Some(msm),
            propensity,
            ..Self::base(Method::Ipw)
        }
    }

    pub fn dr(outcome: ModelSpec, propensity: Propensity, grid: Vec<Vec<f64>>) -> Self {
        EstimatorRequest {
            outcome: Some(outcome),
            propensity,
            grid,
            ..Self::base(Method::Dr)
        }
    }

    pub fn with_correction(mut self, correction: Correction) -> Self {
        self.correction = correction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, grid: Vec<Vec<f64>>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_contrasts(mut self, contrasts: Vec<(usize, usize)>) -> Self {
        self.contrasts = contrasts;
        self
    }

    /// `method-correction`, e.g. `cs-dr`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.correction, self.method)
    }

    fn validate(&self, data: &Dataset, sigma: &MeCovariance) -> Result<()> {
        let m = data.m();
        if sigma.dim() != m {
            return Err(Error::Dimension(format!(
                "measurement-error covariance is {0}x{0}, data has {m} exposures",
                sigma.dim()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if let Some(bad) = self
            .grid
            .iter()
            .find(|a| a.len() != m || a.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Specification(format!(
                "grid point {bad:?} must have {m} finite exposure values"
            )));
        }
        for &(g, h) in &self.contrasts {
            if g >= self.grid.len() || h >= self.grid.len() {
                return Err(Error::Specification(format!(
                    "contrast ({g}, {h}) refers past the {}-point grid",
                    self.grid.len()
                )));
            }
        }
        match self.method {
            Method::Gformula => {
                if self.outcome.is_none() {
                    return Err(Error::Specification("g-formula requires an outcome model".into()));
                }
            }
            Method::Ipw => {
                if self.msm.is_none() {
                    return Err(Error::Specification("IPW requires a marginal structural model".into()));
                }
            }
            Method::Dr => {
                let outcome = self
                    .outcome
                    .as_ref()
                    .ok_or_else(|| Error::Specification("DR requires an outcome model".into()))?;
                if let Some(msm) = &self.msm {
                    if msm.link != outcome.link {
                        return Err(Error::Specification(format!(
                            "DR needs the outcome model and MSM on the same link ({} vs {})",
                            outcome.link, msm.link
                        )));
                    }
                }
                match outcome.link {
                    Link::Identity => {}
                    Link::Log => {
                        let design = crate::models::Design::resolve(
                            &outcome.design,
                            data.covariate_names(),
                            data.exposure_names(),
                        )?;
                        if design.has_exposure_covariate_interaction() {
                            return Err(Error::Specification(
                                "DR with a log link does not allow exposure-by-covariate interactions".into(),
                            ));
                        }
                    }
                    Link::Logit => return Err(Error::Specification("DR supports identity or log links only".into())),
                }
            }
        }
        if matches!(self.method, Method::Gformula | Method::Dr) && self.grid.is_empty() {
            return Err(Error::Specification("dose-response grid is empty".into()));
        }
        if matches!(self.method, Method::Ipw | Method::Dr) {
            if let Propensity::Estimated(specs) = &self.propensity {
                if specs.is_empty() {
                    return Err(Error::Specification(
                        "IPW and DR need propensity models or known weights".into(),
                    ));
                }
            }
        }
        if self.truncation.is_some() && self.correction == Correction::Cs {
            return Err(Error::Specification(
                "weight truncation applies to real weights only and cannot be combined with the corrected score".into(),
            ));
        }
        if self.correction == Correction::Cs && self.mccs.replicates == 0 {
            return Err(Error::Argument(
                "corrected score needs at least one perturbation".into(),
            ));
        }
        Ok(())
    }
}

/// Dose-response curve with pointwise standard errors and Wald intervals.
/// Standard errors are NaN for point-estimate-only corrections.
#[derive(Clone, Debug, PartialEq)]
pub struct DoseResponse {
    pub points: Vec<Vec<f64>>,
    pub estimate: Vec<f64>,
    pub se_uc: Vec<f64>,
    pub se_bc: Vec<f64>,
    pub ci_uc: Vec<(f64, f64)>,
    pub ci_bc: Vec<(f64, f64)>,
}

/// `η(a_first) - η(a_second)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Contrast {
    pub first: usize,
    pub second: usize,
    pub estimate: f64,
    pub se_uc: f64,
    pub se_bc: f64,
    pub ci_uc: (f64, f64),
    pub ci_bc: (f64, f64),
}

/// Result of one estimator on one dataset.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub method: Method,
    pub correction: Correction,
    pub theta: ParameterVector,
    /// `None` for regression calibration and SIMEX (point estimates only).
    pub vcov_uc: Option<DMatrix<f64>>,
    pub vcov_bc: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
    pub alpha: f64,
    pub dose_response: Option<DoseResponse>,
    pub contrasts: Vec<Contrast>,
}

impl Estimate {
    pub fn name(&self) -> String {
        format!("{}-{}", self.correction, self.method)
    }

    fn se(v: &Option<DMatrix<f64>>, k: usize) -> f64 {
        v.as_ref().map_or(f64::NAN, |m| m[(k, k)].max(0.0).sqrt())
    }

    pub fn se_uc(&self) -> Vec<f64> {
        (0..self.theta.len()).map(|k| Self::se(&self.vcov_uc, k)).collect()
    }

    pub fn se_bc(&self) -> Vec<f64> {
        (0..self.theta.len()).map(|k| Self::se(&self.vcov_bc, k)).collect()
    }

    /// Value of `block[label]`.
    pub fn value(&self, block: &str, label: usize) -> Option<f64> {
        self.theta.block_values(block).and_then(|v| v.get(label).copied())
    }

    pub fn fit_result(&self) -> Option<FitResult> {
        Some(FitResult {
            theta_hat: self.theta.clone(),
            vcov_uc: self.vcov_uc.clone()?,
            vcov_bc: self.vcov_bc.clone()?,
            converged: self.converged,
            iterations: self.iterations,
            max_residual: self.max_residual,
        })
    }
}

/// Runs the requested estimator. Oracle fits expect the true exposures in
/// `data`; every other correction takes the measured ones.
pub fn fit(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    let name = req.name();
    fit_inner(req, data, sigma).map_err(|e| e.in_estimator(name))
}

pub fn fit_gformula(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    expect_method(req, Method::Gformula)?;
    fit(req, data, sigma)
}

pub fn fit_ipw(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    expect_method(req, Method::Ipw)?;
    fit(req, data, sigma)
}

pub fn fit_dr(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    expect_method(req, Method::Dr)?;
    fit(req, data, sigma)
}

fn expect_method(req: &EstimatorRequest, m: Method) -> Result<()> {
    if req.method != m {
        return Err(Error::Specification(format!("request is for {}, not {m}", req.method)));
    }
    Ok(())
}

fn fit_inner(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    req.validate(data, sigma)?;
    match req.correction {
        Correction::Oracle | Correction::Naive => {
            let zero = MeCovariance::zero(data.m());
            let plan = Plan::new(req, data, &zero)?;
            let theta0 = plan.start_values();
            plan.fit(req, data, None, &theta0)
        }
        Correction::Cs => {
            let zero = MeCovariance::zero(data.m());
            let naive = Plan::new(req, data, &zero)?;
            let root = naive.solve(req, data, &naive.start_values())?;
            let plan = Plan::new(req, data, sigma)?;
            let mut theta0 = root.theta;
            if !sigma.is_zero() {
                plan.overwrite_propensity(&mut theta0);
            }
            let keys = observation_keys(data);
            let bank = PerturbationBank::draw(
                &keys,
                req.mccs.replicates,
                sigma,
                rng::derive_seed(req.seed, &[rng::purpose::MCCS]),
                req.mccs.antithetic,
            )?;
            plan.fit(req, data, Some(Arc::new(bank)), &theta0)
        }
        Correction::Rc => {
            let imputed = data.with_exposures(rc_impute(data, sigma)?)?;
            let naive_req = EstimatorRequest {
                correction: Correction::Naive,
                ..req.clone()
            };
            let est = fit_inner(&naive_req, &imputed, &MeCovariance::zero(data.m()))?;
            Ok(point_only(est, Correction::Rc))
        }
        Correction::Simex => simex_fit(req, data, sigma),
    }
}

pub(crate) fn point_only(mut est: Estimate, correction: Correction) -> Estimate {
    est.correction = correction;
    est.vcov_uc = None;
    est.vcov_bc = None;
    if let Some(dr) = &mut est.dose_response {
        let g = dr.points.len();
        dr.se_uc = vec![f64::NAN; g];
        dr.se_bc = vec![f64::NAN; g];
        dr.ci_uc = vec![(f64::NAN, f64::NAN); g];
        dr.ci_bc = vec![(f64::NAN, f64::NAN); g];
    }
    for c in &mut est.contrasts {
        c.se_uc = f64::NAN;
        c.se_bc = f64::NAN;
        c.ci_uc = (f64::NAN, f64::NAN);
        c.ci_bc = (f64::NAN, f64::NAN);
    }
    est
}

fn grid_label(a: &[f64]) -> String {
    a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Resolved models, parameter layout and the closed-form propensity start.
pub(crate) struct Plan {
    method: Method,
    /// Outcome model (g-formula, DR) or MSM (IPW).
    model: OutcomeModel,
    /// Propensity model supplying start values (estimated) or fixed weights.
    ps: Option<PropensityModel>,
    ps_estimated: bool,
    /// `Σ` used in the propensity moment equations.
    sigma_ps: MeCovariance,
    cap: Option<f64>,
    grid: Vec<Vec<f64>>,
    layout: ParameterVector,
    eta_offset: usize,
    ps_offset: usize,
}

impl Plan {
    pub(crate) fn new(req: &EstimatorRequest, data: &Dataset, sigma_ps: &MeCovariance) -> Result<Plan> {
        let model = match req.method {
            Method::Ipw => OutcomeModel::resolve_msm(req.msm.as_ref().expect("validated"), data)?,
            _ => OutcomeModel::resolve(req.outcome.as_ref().expect("validated"), data)?,
        };
        let (ps, ps_estimated) = match (req.method, &req.propensity) {
            (Method::Gformula, _) => (None, false),
            (_, Propensity::Known(m)) => (Some(m.clone()), false),
            (_, Propensity::Estimated(specs)) => (Some(fit_propensity(data, sigma_ps, specs)?), true),
        };
        let cap = match (&ps, req.truncation) {
            (Some(ps), Some(q)) => Some(weight_quantile(ps, data, q)?),
            _ => None,
        };
        let p = model.ncoef();
        let coef_name = if req.method == Method::Ipw { "gamma" } else { "beta" };
        let mut blocks = vec![(coef_name.to_string(), model.design.labels().to_vec())];
        let grid = if req.method == Method::Ipw {
            Vec::new()
        } else {
            req.grid.clone()
        };
        if !grid.is_empty() {
            blocks.push(("eta".into(), grid.iter().map(|a| grid_label(a)).collect()));
        }
        let ps_offset = p + grid.len();
        let mut values = vec![0.0; ps_offset];
        if let (true, Some(ps)) = (ps_estimated, &ps) {
            for part in ps.parts() {
                blocks.push((format!("ps[{}]", part.name), part.labels()));
            }
            values.extend_from_slice(ps.values());
        }
        let layout = ParameterVector::new(values, blocks)?;
        Ok(Plan {
            method: req.method,
            model,
            ps,
            ps_estimated,
            sigma_ps: sigma_ps.clone(),
            cap,
            grid,
            layout,
            eta_offset: p,
            ps_offset,
        })
    }

    /// Zero regression coefficients and dose-response values, closed-form
    /// propensity parameters.
    pub(crate) fn start_values(&self) -> Vec<f64> {
        self.layout.values().to_vec()
    }

    fn overwrite_propensity(&self, theta: &mut [f64]) {
        if let (true, Some(ps)) = (self.ps_estimated, &self.ps) {
            theta[self.ps_offset..self.ps_offset + ps.n_params()].copy_from_slice(ps.values());
        }
    }

    pub(crate) fn layout(&self) -> &ParameterVector {
        &self.layout
    }

    pub(crate) fn model(&self) -> &OutcomeModel {
        &self.model
    }

    fn stack<'a>(&self, data: &'a Dataset, bank: Option<Arc<PerturbationBank>>) -> Result<Stack<'a>> {
        let weighting = match (&self.ps, self.ps_estimated) {
            (None, _) => Weighting::None,
            (Some(ps), false) => Weighting::Fixed(ps.clone()),
            (Some(ps), true) => Weighting::Theta {
                parts: ps.parts().to_vec(),
                offset: self.ps_offset,
                len: ps.n_params(),
            },
        };
        let label = match self.method {
            Method::Gformula => "outcome score",
            Method::Ipw => "weighted MSM score",
            Method::Dr => "weighted outcome score",
        };
        let score = RegressionScore::new(label, data, self.model.clone(), 0, weighting, self.cap);
        let mut blocks: Vec<Box<dyn EquationBlock + 'a>> = Vec::new();
        match bank {
            Some(bank) => blocks.push(Box::new(mccs_transform(score, bank)?)),
            None => blocks.push(Box::new(real_score(score))),
        }
        if !self.grid.is_empty() {
            blocks.push(Box::new(Standardization::new(
                data,
                &self.model,
                &self.grid,
                0,
                self.eta_offset,
            )));
        }
        if let (true, Some(ps)) = (self.ps_estimated, &self.ps) {
            blocks.extend(ps.equation_blocks(data, &self.sigma_ps, self.ps_offset));
        }
        Stack::new(data.n(), self.layout.len(), blocks)?.with_weights(data.sample_weight().map(<[f64]>::to_vec))
    }

    /// Root of the real (uncorrected) stack from `theta0`, without variances.
    pub(crate) fn solve(&self, req: &EstimatorRequest, data: &Dataset, theta0: &[f64]) -> Result<mestim::Root> {
        let stack = self.stack(data, None)?;
        mestim::solve(&stack, theta0, &req.solver)
    }

    fn fit(
        &self,
        req: &EstimatorRequest,
        data: &Dataset,
        bank: Option<Arc<PerturbationBank>>,
        theta0: &[f64],
    ) -> Result<Estimate> {
        let stack = self.stack(data, bank)?;
        let start = self.layout.with_values(theta0.to_vec())?;
        let fr = mestim::fit(&stack, &start, &req.solver)?;
        let mut est = Estimate {
            method: req.method,
            correction: req.correction,
            theta: fr.theta_hat,
            vcov_uc: Some(fr.vcov_uc),
            vcov_bc: Some(fr.vcov_bc),
            converged: fr.converged,
            iterations: fr.iterations,
            max_residual: fr.max_residual,
            alpha: req.alpha,
            dose_response: None,
            contrasts: Vec::new(),
        };
        self.summarize(req, &mut est)?;
        Ok(est)
    }

    /// Fills in the dose-response curve and contrasts from `est.theta`.
    pub(crate) fn summarize(&self, req: &EstimatorRequest, est: &mut Estimate) -> Result<()> {
        if req.grid.is_empty() {
            return Ok(());
        }
        let q = est.theta.len();
        let theta = est.theta.values().to_vec();
        let nan = DMatrix::from_element(q, q, f64::NAN);
        let (vuc, vbc) = (
            est.vcov_uc.clone().unwrap_or_else(|| nan.clone()),
            est.vcov_bc.clone().unwrap_or(nan),
        );
        let ncoef = self.model.ncoef();
        // η(a_g) as a function of θ
        let eta: Box<dyn Fn(&[f64], usize) -> f64 + '_> = if self.method == Method::Ipw {
            Box::new(move |t: &[f64], g: usize| {
                self.model
                    .evaluate_mean_real(&t[..ncoef], &[], &req.grid[g])
                    .unwrap_or(f64::NAN)
            })
        } else {
            let off = self.eta_offset;
            Box::new(move |t: &[f64], g: usize| t[off + g])
        };
        let value_se = |f: &dyn Fn(&[f64]) -> f64| -> Result<(f64, f64, f64)> {
            let est = f(&theta);
            if !vuc.iter().all(|v| v.is_finite()) {
                return Ok((est, f64::NAN, f64::NAN));
            }
            let (_, se_uc) = mestim::delta_method(f, &theta, &vuc)?;
            let (_, se_bc) = mestim::delta_method(f, &theta, &vbc)?;
            Ok((est, se_uc, se_bc))
        };
        let mut dr = DoseResponse {
            points: req.grid.clone(),
            estimate: Vec::new(),
            se_uc: Vec::new(),
            se_bc: Vec::new(),
            ci_uc: Vec::new(),
            ci_bc: Vec::new(),
        };
        for g in 0..req.grid.len() {
            let (v, su, sb) = value_se(&|t: &[f64]| eta(t, g))?;
            dr.estimate.push(v);
            dr.se_uc.push(su);
            dr.se_bc.push(sb);
            dr.ci_uc.push(ci(v, su, req.alpha));
            dr.ci_bc.push(ci(v, sb, req.alpha));
        }
        for &(first, second) in &req.contrasts {
            let (v, su, sb) = value_se(&|t: &[f64]| eta(t, first) - eta(t, second))?;
            est.contrasts.push(Contrast {
                first,
                second,
                estimate: v,
                se_uc: su,
                se_bc: sb,
                ci_uc: ci(v, su, req.alpha),
                ci_bc: ci(v, sb, req.alpha),
            });
        }
        est.dose_response = Some(dr);
        Ok(())
    }
}

/// Wald interval, NaN when the standard error is unavailable.
fn ci(estimate: f64, se: f64, alpha: f64) -> (f64, f64) {
    mestim::wald_ci(estimate, se, alpha).unwrap_or((f64::NAN, f64::NAN))
}

#[cfg(test)]
mod tests;
