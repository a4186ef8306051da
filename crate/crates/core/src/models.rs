//! Outcome models, marginal structural models and normal propensity
//! densities.
//!
//! Designs are explicit term lists: each term is a product of factors, a
//! factor being a covariate or an exposure raised to a positive integer
//! power. Exposure factors accept complex values so that the same model can
//! be evaluated at `A* + iε̃`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::complex::Complex;
use crate::cscore::{complex_link_with_derivative, guarded_exp};
use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::mestim::EquationBlock;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Identity,
    Log,
    Logit,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Log => "log",
            Link::Logit => "logit",
        })
    }
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

/// One factor of a design term, e.g. `{ exposure = "a", power = 2 }`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<String>,
    #[serde(default = "one")]
    pub power: u32,
}

impl Factor {
    pub fn covariate(name: impl Into<String>) -> Self {
        Factor {
            covariate: Some(name.into()),
            exposure: None,
            power: 1,
        }
    }

    pub fn exposure(name: impl Into<String>) -> Self {
        Factor {
            covariate: None,
            exposure: Some(name.into()),
            power: 1,
        }
    }

    pub fn pow(mut self, power: u32) -> Self {
        self.power = power;
        self
    }
}

/// Declarative design: an optional intercept plus product terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub terms: Vec<Vec<Factor>>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec {
            intercept: true,
            terms: Vec::new(),
        }
    }
}

impl DesignSpec {
    pub fn new(terms: Vec<Vec<Factor>>) -> Self {
        DesignSpec { intercept: true, terms }
    }
}

/// Outcome model or MSM: a design plus a link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub link: Link,
    #[serde(flatten)]
    pub design: DesignSpec,
}

impl ModelSpec {
    pub fn new(link: Link, terms: Vec<Vec<Factor>>) -> Self {
        ModelSpec {
            link,
            design: DesignSpec::new(terms),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Column {
    covariates: Vec<(usize, u32)>,
    exposures: Vec<(usize, u32)>,
}

/// A design resolved against a dataset's column names.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    columns: Vec<Column>,
    labels: Vec<String>,
}

fn push_factor(list: &mut Vec<(usize, u32)>, idx: usize, power: u32) {
    match list.iter_mut().find(|(i, _)| *i == idx) {
        Some((_, p)) => *p += power,
        None => list.push((idx, power)),
    }
}

impl Design {
    pub fn resolve(spec: &DesignSpec, covariates: &[String], exposures: &[String]) -> Result<Design> {
        let mut columns = Vec::new();
        let mut labels = Vec::new();
        if spec.intercept {
            columns.push(Column {
                covariates: vec![],
                exposures: vec![],
            });
            labels.push("(Intercept)".to_string());
        }
        for term in &spec.terms {
            if term.is_empty() {
                return Err(Error::Specification("empty design term".into()));
            }
            let mut col = Column {
                covariates: vec![],
                exposures: vec![],
            };
            for f in term {
                if f.power == 0 {
                    return Err(Error::Specification("factor powers must be >= 1".into()));
                }
                match (&f.covariate, &f.exposure) {
                    (Some(c), None) => {
                        let idx = covariates.iter().position(|n| n == c).ok_or_else(|| {
                            Error::Specification(format!("design references unknown covariate `{c}`"))
                        })?;
                        push_factor(&mut col.covariates, idx, f.power);
                    }
                    (None, Some(e)) => {
                        let idx = exposures
                            .iter()
                            .position(|n| n == e)
                            .ok_or_else(|| Error::Specification(format!("design references unknown exposure `{e}`")))?;
                        push_factor(&mut col.exposures, idx, f.power);
                    }
                    _ => {
                        return Err(Error::Specification(
                            "each factor names exactly one of `covariate` or `exposure`".into(),
                        ))
                    }
                }
            }
            let name = |idx: usize, p: u32, names: &[String]| {
                if p == 1 {
                    names[idx].clone()
                } else {
                    format!("{}^{p}", names[idx])
                }
            };
            let label: Vec<String> = col
                .exposures
                .iter()
                .map(|&(i, p)| name(i, p, exposures))
                .chain(col.covariates.iter().map(|&(i, p)| name(i, p, covariates)))
                .collect();
            labels.push(label.join(":"));
            columns.push(col);
        }
        if columns.is_empty() {
            return Err(Error::Specification("design has no columns".into()));
        }
        for (k, l) in labels.iter().enumerate() {
            if labels[..k].contains(l) {
                return Err(Error::Specification(format!("duplicate design term `{l}`")));
            }
        }
        Ok(Design { columns, labels })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn uses_exposures(&self) -> bool {
        self.columns.iter().any(|c| !c.exposures.is_empty())
    }

    pub fn uses_covariates(&self) -> bool {
        self.columns.iter().any(|c| !c.covariates.is_empty())
    }

    /// True if some term multiplies an exposure by a covariate.
    pub fn has_exposure_covariate_interaction(&self) -> bool {
        self.columns
            .iter()
            .any(|c| !c.exposures.is_empty() && !c.covariates.is_empty())
    }

    /// Design row at covariates `l` and (possibly complex) exposures `a`.
    #[inline]
    pub fn row(&self, l: &[f64], a: &[Complex], out: &mut [Complex]) {
        for (o, col) in out.iter_mut().zip(&self.columns) {
            let mut c = 1.0;
            for &(j, p) in &col.covariates {
                c *= l[j].powi(p as i32);
            }
            let mut z = Complex::real(c);
            for &(j, p) in &col.exposures {
                z *= a[j].powi(p);
            }
            *o = z;
        }
    }

    /// Design row at real exposures.
    pub fn row_real(&self, l: &[f64], a: &[f64], out: &mut [f64]) {
        for (o, col) in out.iter_mut().zip(&self.columns) {
            let mut c = 1.0;
            for &(j, p) in &col.covariates {
                c *= l[j].powi(p as i32);
            }
            for &(j, p) in &col.exposures {
                c *= a[j].powi(p as i32);
            }
            *o = c;
        }
    }
}

/// A resolved outcome model or MSM. Coefficients live in θ and are passed
/// to each evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeModel {
    pub design: Design,
    pub link: Link,
}

impl OutcomeModel {
    pub fn resolve(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        Ok(OutcomeModel {
            design: Design::resolve(&spec.design, data.covariate_names(), data.exposure_names())?,
            link: spec.link,
        })
    }

    /// An MSM: exposures only.
    pub fn resolve_msm(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        let model = Self::resolve(spec, data)?;
        if model.design.uses_covariates() {
            return Err(Error::Specification(
                "marginal structural model may not contain covariate terms".into(),
            ));
        }
        Ok(model)
    }

    pub fn ncoef(&self) -> usize {
        self.design.ncols()
    }

    pub fn linear_predictor(&self, beta: &[f64], x: &[Complex]) -> Complex {
        let mut lp = Complex::ZERO;
        for (b, xk) in beta.iter().zip(x) {
            lp += *xk * *b;
        }
        lp
    }

    /// `μ(l, a; β) = g⁻¹(x(l, a)ᵀβ)`.
    pub fn evaluate_mean(&self, beta: &[f64], l: &[f64], a: &[Complex]) -> Result<Complex> {
        let mut x = vec![Complex::ZERO; self.ncoef()];
        self.design.row(l, a, &mut x);
        Ok(complex_link_with_derivative(self.linear_predictor(beta, &x), self.link)?.0)
    }

    /// Writes `∂μ/∂β` into `grad` and returns `μ`.
    pub fn mean_gradient(&self, beta: &[f64], l: &[f64], a: &[Complex], grad: &mut [Complex]) -> Result<Complex> {
        self.design.row(l, a, grad);
        let (mu, d) = complex_link_with_derivative(self.linear_predictor(beta, grad), self.link)?;
        for g in grad.iter_mut() {
            *g *= d;
        }
        Ok(mu)
    }

    /// Real-valued mean at real exposures, via the complex path with zero
    /// imaginary parts.
    pub fn evaluate_mean_real(&self, beta: &[f64], l: &[f64], a: &[f64]) -> Result<f64> {
        let a: Vec<Complex> = a.iter().map(|&v| Complex::real(v)).collect();
        Ok(self.evaluate_mean(beta, l, &a)?.re)
    }
}

/// Conditional-mean design for one exposure's propensity model; the
/// intercept is always included.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySpec {
    pub exposure: String,
    #[serde(default)]
    pub terms: Vec<Vec<Factor>>,
}

impl PropensitySpec {
    pub fn new(exposure: impl Into<String>, terms: Vec<Vec<Factor>>) -> Self {
        PropensitySpec {
            exposure: exposure.into(),
            terms,
        }
    }
}

/// Normal model for one exposure: `A_j | L ~ N(x(L)ᵀζ, δ²)` over an
/// intercept-only marginal `A_j ~ N(μ, τ²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsPart {
    pub exposure: usize,
    pub name: String,
    pub design: Design,
}

impl PsPart {
    /// `ζ` (one per design column), then `δ²`, `μ`, `τ²`.
    pub fn n_params(&self) -> usize {
        self.design.ncols() + 3
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = self.design.labels().to_vec();
        out.extend(["delta2", "mu", "tau2"].map(String::from));
        out
    }

    fn resolve(spec: &PropensitySpec, data: &Dataset) -> Result<PsPart> {
        let exposure = data.exposure_index(&spec.exposure).ok_or_else(|| {
            Error::Specification(format!("propensity model for unknown exposure `{}`", spec.exposure))
        })?;
        let design = Design::resolve(
            &DesignSpec::new(spec.terms.clone()),
            data.covariate_names(),
            data.exposure_names(),
        )?;
        if design.uses_exposures() {
            return Err(Error::Specification(format!(
                "propensity model for `{}` may only use covariates",
                spec.exposure
            )));
        }
        Ok(PsPart {
            exposure,
            name: spec.exposure.clone(),
            design,
        })
    }
}

/// Product of per-exposure normal density ratios `f(A_j) / f(A_j | L)`,
/// reading the parameters of every part consecutively from `values`.
pub fn stabilized_weight_with(parts: &[PsPart], values: &[f64], l: &[f64], a: &[Complex]) -> Result<Complex> {
    let mut exponent = Complex::ZERO;
    let mut scale = 1.0;
    let mut off = 0;
    let mut x = [0.0f64; 16];
    let mut xv = Vec::new();
    for part in parts {
        let k = part.design.ncols();
        let xs: &mut [f64] = if k <= x.len() {
            &mut x[..k]
        } else {
            xv.resize(k, 0.0);
            &mut xv[..]
        };
        part.design.row_real(l, &[], xs);
        let zeta = &values[off..off + k];
        let (d2, mu, t2) = (values[off + k], values[off + k + 1], values[off + k + 2]);
        if !(d2 > 0.0 && t2 > 0.0) {
            return Err(Error::numeric(
                "stabilized weight (non-positive propensity variance)",
                values,
            ));
        }
        let mean: f64 = xs.iter().zip(zeta).map(|(a, b)| a * b).sum();
        let aj = a[part.exposure];
        let r_cond = aj - mean;
        let r_marg = aj - mu;
        exponent += (r_cond * r_cond).scale(0.5 / d2) - (r_marg * r_marg).scale(0.5 / t2);
        scale *= (d2 / t2).sqrt();
        off += k + 3;
    }
    Ok(guarded_exp(exponent)?.scale(scale))
}

/// Fitted (or user-fixed) normal propensity models for all modelled
/// exposures.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityModel {
    parts: Vec<PsPart>,
    values: Vec<f64>,
}

impl PropensityModel {
    pub fn new(parts: Vec<PsPart>, values: Vec<f64>) -> Result<Self> {
        let need: usize = parts.iter().map(PsPart::n_params).sum();
        if values.len() != need {
            return Err(Error::Dimension(format!(
                "propensity model needs {need} values, got {}",
                values.len()
            )));
        }
        let mut off = 0;
        for p in &parts {
            let k = p.design.ncols();
            let (d2, t2) = (values[off + k], values[off + k + 2]);
            if !(d2 > 0.0 && t2 > 0.0) {
                return Err(Error::Specification(format!(
                    "propensity variances for `{}` must be positive",
                    p.name
                )));
            }
            off += k + 3;
        }
        Ok(PropensityModel { parts, values })
    }

    /// Fixed parameters for the given specs, laid out as
    /// `[ζ..., δ², μ, τ²]` per exposure.
    pub fn fixed(specs: &[PropensitySpec], data: &Dataset, values: Vec<f64>) -> Result<Self> {
        let parts = specs
            .iter()
            .map(|s| PsPart::resolve(s, data))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts, values)
    }

    /// Marginal and conditional densities coincide, so `SW ≡ 1` exactly.
    pub fn unit(data: &Dataset) -> Self {
        let parts = (0..data.m())
            .map(|j| PsPart {
                exposure: j,
                name: data.exposure_names()[j].clone(),
                design: Design {
                    columns: vec![Column {
                        covariates: vec![],
                        exposures: vec![],
                    }],
                    labels: vec!["(Intercept)".into()],
                },
            })
            .collect::<Vec<_>>();
        let values = parts.iter().flat_map(|_| [0.0, 1.0, 0.0, 1.0]).collect();
        PropensityModel { parts, values }
    }

    pub fn parts(&self) -> &[PsPart] {
        &self.parts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_params(&self) -> usize {
        self.values.len()
    }

    pub fn stabilized_weight(&self, l: &[f64], a: &[Complex]) -> Result<Complex> {
        stabilized_weight_with(&self.parts, &self.values, l, a)
    }

    pub fn stabilized_weight_real(&self, l: &[f64], a: &[f64]) -> Result<f64> {
        let a: Vec<Complex> = a.iter().map(|&v| Complex::real(v)).collect();
        Ok(self.stabilized_weight(l, &a)?.re)
    }

    /// Moment equations whose root is this model's fitting rule, with part
    /// parameters placed at `theta[offset..offset + n_params()]`.
    pub fn equation_blocks<'a>(
        &self,
        data: &'a Dataset,
        sigma: &MeCovariance,
        offset: usize,
    ) -> Vec<Box<dyn EquationBlock + 'a>> {
        let mut out: Vec<Box<dyn EquationBlock + 'a>> = Vec::new();
        let mut off = offset;
        for part in &self.parts {
            let k = part.design.ncols();
            let mut x = vec![0.0; data.n() * k];
            for i in 0..data.n() {
                part.design
                    .row_real(data.covariate_row(i), &[], &mut x[i * k..(i + 1) * k]);
            }
            out.push(Box::new(PropensityEquations {
                label: format!("propensity[{}]", part.name),
                data,
                exposure: part.exposure,
                k,
                x,
                sigma_jj: sigma.variance(part.exposure),
                params: (off..off + k + 3).collect(),
            }));
            off += k + 3;
        }
        out
    }
}

/// Weighted least squares for each propensity spec, with `Σ_jj` removed from
/// the residual and marginal variances (`n` denominators, matching the
/// stacked moment equations).
pub fn fit_propensity(data: &Dataset, sigma: &MeCovariance, specs: &[PropensitySpec]) -> Result<PropensityModel> {
    if sigma.dim() != data.m() {
        return Err(Error::Dimension(format!(
            "measurement-error covariance is {0}x{0}, data has {1} exposures",
            sigma.dim(),
            data.m()
        )));
    }
    let n = data.n();
    let w: Vec<f64> = (0..n).map(|i| data.weight(i)).collect();
    let wsum: f64 = w.iter().sum();
    let mut parts = Vec::new();
    let mut values = Vec::new();
    for spec in specs {
        let part = PsPart::resolve(spec, data)?;
        let k = part.design.ncols();
        let j = part.exposure;
        let mut xtx = DMatrix::<f64>::zeros(k, k);
        let mut xta = DVector::<f64>::zeros(k);
        let mut x = vec![0.0; k];
        for i in 0..n {
            part.design.row_real(data.covariate_row(i), &[], &mut x);
            let a = data.exposure_row(i)[j];
            for r in 0..k {
                xta[r] += w[i] * x[r] * a;
                for c in 0..k {
                    xtx[(r, c)] += w[i] * x[r] * x[c];
                }
            }
        }
        let zeta = xtx
            .cholesky()
            .ok_or_else(|| Error::Collinearity(format!("propensity design for `{}` is singular", part.name)))?
            .solve(&xta);
        let mut rss = 0.0;
        let mut asum = 0.0;
        for i in 0..n {
            part.design.row_real(data.covariate_row(i), &[], &mut x);
            let a = data.exposure_row(i)[j];
            let fit: f64 = x.iter().zip(zeta.iter()).map(|(a, b)| a * b).sum();
            rss += w[i] * (a - fit).powi(2);
            asum += w[i] * a;
        }
        let mu = asum / wsum;
        let tss: f64 = (0..n).map(|i| w[i] * (data.exposure_row(i)[j] - mu).powi(2)).sum();
        let s_jj = sigma.variance(j);
        let delta2 = rss / wsum - s_jj;
        let tau2 = tss / wsum - s_jj;
        for v in [delta2, tau2] {
            if !(v > 0.0) {
                return Err(Error::InfeasibleErrorVariance {
                    exposure: part.name.clone(),
                    value: v,
                });
            }
        }
        values.extend(zeta.iter());
        values.extend([delta2, mu, tau2]);
        parts.push(part);
    }
    PropensityModel::new(parts, values)
}

/// Moment equations for one exposure:
/// `x(A* - xᵀζ)`, `(A* - xᵀζ)² - Σ_jj - δ²`, `A* - μ`, `(A* - μ)² - Σ_jj - τ²`.
struct PropensityEquations<'a> {
    label: String,
    data: &'a Dataset,
    exposure: usize,
    k: usize,
    x: Vec<f64>,
    sigma_jj: f64,
    params: Vec<usize>,
}

impl EquationBlock for PropensityEquations<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn rows(&self) -> usize {
        self.k + 3
    }

    fn params(&self) -> &[usize] {
        &self.params
    }

    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        let k = self.k;
        let x = &self.x[i * k..(i + 1) * k];
        let p = &self.params;
        let a = self.data.exposure_row(i)[self.exposure];
        let fit: f64 = x.iter().zip(p).map(|(xv, &pi)| xv * theta[pi]).sum();
        let r = a - fit;
        for (o, xv) in out.iter_mut().zip(x) {
            *o = xv * r;
        }
        let (d2, mu, t2) = (theta[p[k]], theta[p[k + 1]], theta[p[k + 2]]);
        out[k] = r * r - self.sigma_jj - d2;
        out[k + 1] = a - mu;
        out[k + 2] = (a - mu) * (a - mu) - self.sigma_jj - t2;
        Ok(())
    }
}

/// The `q`-quantile (type 7) of the real stabilized weights over the data.
pub fn weight_quantile(model: &PropensityModel, data: &Dataset, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Argument(format!("truncation quantile {q} must lie in (0, 1]")));
    }
    let mut sw = (0..data.n())
        .map(|i| model.stabilized_weight_real(data.covariate_row(i), data.exposure_row(i)))
        .collect::<Result<Vec<_>>>()?;
    sw.sort_by(f64::total_cmp);
    let h = (sw.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(sw[lo] + (h - lo as f64) * (sw[hi] - sw[lo]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn cubic() -> OutcomeModel {
        let spec = ModelSpec::new(
            Link::Identity,
            vec![
                vec![Factor::exposure("a")],
                vec![Factor::exposure("a").pow(2)],
                vec![Factor::exposure("a").pow(3)],
                vec![Factor::covariate("l")],
            ],
        );
        OutcomeModel {
            design: Design::resolve(&spec.design, &names(&["l"]), &names(&["a"])).unwrap(),
            link: spec.link,
        }
    }

    #[test]
    fn evaluates_paper_means() {
        let m = cubic();
        let mu = m
            .evaluate_mean(&[0.0, 0.25, 0.5, -0.5, 1.0], &[0.0], &[Complex::ONE])
            .unwrap();
        assert!((mu.re - 0.25).abs() < 1e-15 && mu.im == 0.0);
        assert_eq!(m.design.labels(), &["(Intercept)", "a", "a^2", "a^3", "l"]);

        let msm = OutcomeModel {
            design: Design::resolve(&DesignSpec::new(vec![vec![Factor::exposure("a")]]), &[], &names(&["a"])).unwrap(),
            link: Link::Identity,
        };
        let v = msm.evaluate_mean(&[0.475, 0.175], &[], &[Complex::ONE]).unwrap();
        assert!((v.re - 0.65).abs() < 1e-15);
        assert_eq!(
            msm.evaluate_mean(&[0.0, 0.0], &[], &[Complex::new(2.0, 1.0)]).unwrap(),
            Complex::ZERO
        );
    }

    #[test]
    fn gradients() {
        let mut m = cubic();
        let beta = [0.1, 0.2, -0.3, 0.05, 0.4];
        let a = [Complex::real(0.7)];
        let mut g = vec![Complex::ZERO; 5];
        m.mean_gradient(&beta, &[0.3], &a, &mut g).unwrap();
        let mut x = vec![Complex::ZERO; 5];
        m.design.row(&[0.3], &a, &mut x);
        assert_eq!(g, x);

        m.link = Link::Log;
        m.mean_gradient(&[0.0; 5], &[0.3], &a, &mut g).unwrap();
        assert_eq!(g, x);
    }

    #[test]
    fn complex_and_real_evaluations_agree() {
        let m = cubic();
        let beta = [0.1, 0.2, -0.3, 0.05, 0.4];
        let real = m.evaluate_mean_real(&beta, &[0.3], &[1.7]).unwrap();
        let cx = m.evaluate_mean(&beta, &[0.3], &[Complex::new(1.7, 0.0)]).unwrap();
        assert_eq!(real, cx.re);
    }

    #[test]
    fn rejects_bad_designs() {
        let cov = names(&["l"]);
        let exp = names(&["a"]);
        let bad = |terms| Design::resolve(&DesignSpec::new(terms), &cov, &exp).is_err();
        assert!(bad(vec![vec![Factor::covariate("nope")]]));
        assert!(bad(vec![vec![Factor::exposure("a").pow(0)]]));
        assert!(bad(vec![vec![]]));
        assert!(bad(vec![vec![Factor::exposure("a")], vec![Factor::exposure("a")]]));
        let both = Factor {
            covariate: Some("l".into()),
            exposure: Some("a".into()),
            power: 1,
        };
        assert!(bad(vec![vec![both]]));
    }

    #[test]
    fn interaction_detection_and_labels() {
        let d = Design::resolve(
            &DesignSpec::new(vec![vec![Factor::exposure("a"), Factor::covariate("l")]]),
            &names(&["l"]),
            &names(&["a"]),
        )
        .unwrap();
        assert!(d.has_exposure_covariate_interaction());
        assert_eq!(d.labels()[1], "a:l");
    }

    #[test]
    fn parses_toml_model() {
        let src = r#"
            link = "logit"
            terms = [[{ exposure = "a" }], [{ exposure = "a", power = 2 }], [{ covariate = "l" }]]
        "#;
        let spec: ModelSpec = toml::from_str(src).unwrap();
        assert_eq!(spec.link, Link::Logit);
        assert!(spec.design.intercept);
        assert_eq!(spec.design.terms[1][0].power, 2);
    }

    fn sim2_like() -> Dataset {
        let l: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) / 25.0).collect();
        let a1: Vec<f64> = l
            .iter()
            .enumerate()
            .map(|(i, v)| v * v + ((i * 7 % 11) as f64 - 5.0) / 4.0)
            .collect();
        let a2: Vec<f64> = l
            .iter()
            .enumerate()
            .map(|(i, v)| -v * v + ((i * 5 % 13) as f64 - 6.0) / 5.0)
            .collect();
        Dataset::builder()
            .outcome(vec![0.0; 40])
            .covariate("l", l)
            .exposure("a1", a1)
            .exposure("a2", a2)
            .build()
            .unwrap()
    }

    fn ps_specs() -> Vec<PropensitySpec> {
        vec![
            PropensitySpec::new("a1", vec![vec![Factor::covariate("l").pow(2)]]),
            PropensitySpec::new("a2", vec![vec![Factor::covariate("l").pow(2)]]),
        ]
    }

    #[test]
    fn unit_model_gives_unit_weights() {
        let d = sim2_like();
        let m = PropensityModel::unit(&d);
        for a in [[0.3, -2.0], [5.0, 1.0]] {
            assert_eq!(m.stabilized_weight_real(&[0.2], &a).unwrap(), 1.0);
            let z = [Complex::new(a[0], 0.4), Complex::new(a[1], -0.1)];
            assert_eq!(m.stabilized_weight(&[0.2], &z).unwrap(), Complex::ONE);
        }
    }

    #[test]
    fn weight_matches_density_ratio() {
        let d = sim2_like();
        let values = vec![0.0, 1.0, 1.0, 0.72, 1.2592, 0.0, -1.0, 1.0, -0.72, 1.2592];
        let m = PropensityModel::fixed(&ps_specs(), &d, values).unwrap();
        let pdf = |x: f64, mean: f64, var: f64| {
            (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        };
        let direct = pdf(0.0, 0.72, 1.2592) / pdf(0.0, 0.0, 1.0) * pdf(0.0, -0.72, 1.2592) / pdf(0.0, 0.0, 1.0);
        let sw = m.stabilized_weight_real(&[0.0], &[0.0, 0.0]).unwrap();
        assert!((sw - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn propensity_fit_is_least_squares_and_solves_its_equations() {
        let d = sim2_like();
        let m = fit_propensity(&d, &MeCovariance::zero(2), &ps_specs()).unwrap();
        let blocks = m.equation_blocks(&d, &MeCovariance::zero(2), 0);
        let mut total = vec![0.0; m.n_params()];
        let mut out = vec![0.0; 5];
        for (b, block) in blocks.iter().enumerate() {
            for i in 0..d.n() {
                block.eval(i, m.values(), &mut out).unwrap();
                for r in 0..5 {
                    total[b * 5 + r] += out[r];
                }
            }
        }
        assert!(total.iter().all(|v| v.abs() < 1e-10), "{total:?}");

        let corrected = fit_propensity(&d, &MeCovariance::diagonal(&[0.1, 0.0]).unwrap(), &ps_specs()).unwrap();
        assert!((m.values()[2] - corrected.values()[2] - 0.1).abs() < 1e-12);
        assert_eq!(m.values()[7], corrected.values()[7]);
        assert!(matches!(
            fit_propensity(&d, &MeCovariance::diagonal(&[100.0, 0.0]).unwrap(), &ps_specs()),
            Err(Error::InfeasibleErrorVariance { .. })
        ));
    }
}
