//! Data-generating processes for the simulation designs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::estimators::{apply_two_phase, estimate_me_covariance};
use crate::rng::{self, purpose, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// One exposure, uniform confounder, cubic outcome (g-formula).
    Sim1,
    /// Two exposures with means `(L², -L²)`, linear outcome (IPW).
    Sim2,
    /// Binary outcome, two confounders, one exposure (DR).
    Sim3,
    /// `Sim2` across exposure reliabilities.
    ReliabilitySweep,
    /// `Sim2` with `Σ` estimated from a replicate pilot study.
    EstimatedSigma,
    /// `Sim2` with exposure means `(4L², -4L²)`.
    Positivity,
    /// `Sim2` with multiplicative measurement error.
    Multiplicative,
    /// `Sim3` under case-cohort sampling.
    TwoPhase,
}

impl Generator {
    pub const ALL: [Generator; 8] = [
        Generator::Sim1,
        Generator::Sim2,
        Generator::Sim3,
        Generator::ReliabilitySweep,
        Generator::EstimatedSigma,
        Generator::Positivity,
        Generator::Multiplicative,
        Generator::TwoPhase,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Generator::Sim1 => "sim1",
            Generator::Sim2 => "sim2",
            Generator::Sim3 => "sim3",
            Generator::ReliabilitySweep => "reliability_sweep",
            Generator::EstimatedSigma => "estimated_sigma",
            Generator::Positivity => "positivity",
            Generator::Multiplicative => "multiplicative",
            Generator::TwoPhase => "two_phase",
        }
    }

    /// Number of exposures.
    pub fn m(self) -> usize {
        match self {
            Generator::Sim1 | Generator::Sim3 | Generator::TwoPhase => 1,
            _ => 2,
        }
    }

    /// Analytic `Var(A_j)` of each true exposure.
    pub fn exposure_variance(self) -> f64 {
        // Var(L²) = 2·0.36² for L ~ N(0, 0.36)
        let var_l2 = 2.0 * 0.36 * 0.36;
        match self {
            Generator::Sim1 => 1.0 / 12.0 + 0.25,
            Generator::Sim3 | Generator::TwoPhase => 0.01 * 0.25 + 0.09 * 0.16 * 0.16 + 0.04,
            Generator::Positivity => 16.0 * var_l2 + 1.0,
            _ => var_l2 + 1.0,
        }
    }

    /// `Σ` of the base design.
    pub fn default_sigma(self) -> MeCovariance {
        let v = match self {
            Generator::Sim1 => 0.05,
            Generator::Sim3 | Generator::TwoPhase => 0.02,
            _ => 0.2,
        };
        MeCovariance::diagonal(&vec![v; self.m()]).expect("valid diagonal")
    }

    fn exposure_scale(self) -> f64 {
        if self == Generator::Positivity {
            4.0
        } else {
            1.0
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Generator::ALL.into_iter().find(|g| g.id() == s).ok_or_else(|| {
            let ids: Vec<&str> = Generator::ALL.iter().map(|g| g.id()).collect();
            Error::Argument(format!("unknown design `{s}`; available: {}", ids.join(", ")))
        })
    }
}

/// `Σ = diag(Var(A_j)(1 - r)/r)`, the additive error variance giving
/// reliability `Var(A)/Var(A*) = r`.
pub fn reliability_to_sigma(generator: Generator, reliability: f64) -> Result<MeCovariance> {
    if !(reliability > 0.0 && reliability <= 1.0) {
        return Err(Error::Argument(format!("reliability {reliability} must lie in (0, 1]")));
    }
    let v = generator.exposure_variance() * (1.0 - reliability) / reliability;
    MeCovariance::diagonal(&vec![v; generator.m()])
}

/// Variance of the mean-one multiplicative factor giving reliability `r`
/// for the `sim2` exposures: `Var(A)(1 - r) / (r E[A²])`.
pub fn multiplicative_variance(reliability: f64) -> Result<f64> {
    if !(reliability > 0.0 && reliability <= 1.0) {
        return Err(Error::Argument(format!("reliability {reliability} must lie in (0, 1]")));
    }
    let var = Generator::Sim2.exposure_variance();
    let second_moment = var + 0.36 * 0.36;
    Ok(var * (1.0 - reliability) / (reliability * second_moment))
}

/// Per-replicate generator settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Setting {
    /// Additive error with this `Σ` diagonal value per exposure.
    Additive(f64),
    /// `Σ` estimated from a pilot with `k` replicates on `pilot_n` subjects.
    EstimatedSigma { pilot_n: usize, k: usize },
    /// Multiplicative error at this reliability, with an estimated `Σ`.
    Multiplicative { reliability: f64, pilot_n: usize, k: usize },
    /// Case-cohort sampling of this fraction of non-cases.
    Subcohort(f64),
}

impl Setting {
    /// Numeric summary used in tables.
    pub fn value(&self) -> f64 {
        match *self {
            Setting::Additive(v) => v,
            Setting::EstimatedSigma { pilot_n, .. } => pilot_n as f64,
            Setting::Multiplicative { reliability, .. } => reliability,
            Setting::Subcohort(f) => f,
        }
    }
}

/// One simulated dataset.
#[derive(Clone, Debug)]
pub struct Simulated {
    /// Measured exposures.
    pub observed: Dataset,
    /// Same rows with the true exposures.
    pub truth: Dataset,
    /// `Σ` handed to the corrected estimators (estimated when the setting
    /// says so).
    pub sigma: MeCovariance,
}

fn normal(g: &mut StreamRng) -> f64 {
    g.sample(StandardNormal)
}

/// Deterministic dataset for `(seed, replicate)`. The same replicate under a
/// different setting reuses the same underlying draws.
pub fn generate(generator: Generator, setting: Setting, n: usize, seed: u64, replicate: usize) -> Result<Simulated> {
    if n == 0 {
        return Err(Error::Argument("n must be at least 1".into()));
    }
    let mut g = rng::stream(rng::derive_seed(seed, &[purpose::DATA, replicate as u64]), 0);
    let m = generator.m();
    let mut y = Vec::with_capacity(n);
    let mut covariates: Vec<Vec<f64>> = Vec::new();
    let mut a = Vec::with_capacity(n * m);
    let mut z = Vec::with_capacity(n * m);
    match generator {
        Generator::Sim1 => {
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let li: f64 = g.random();
                let ai = li + 0.5 * normal(&mut g);
                let yi = 0.25 * ai + 0.5 * ai * ai - 0.5 * ai.powi(3) + li + 0.16 * normal(&mut g);
                l.push(li);
                a.push(ai);
                y.push(yi);
                z.push(normal(&mut g));
            }
            covariates.push(l);
        }
        Generator::Sim3 | Generator::TwoPhase => {
            let (mut l1, mut l2) = (Vec::with_capacity(n), Vec::with_capacity(n));
            for _ in 0..n {
                let x1 = if g.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let x2 = 0.16 * normal(&mut g);
                let ai = 0.1 - 0.1 * x1 + 0.3 * x2 + 0.2 * normal(&mut g);
                let p = (0.35 + 0.15 * ai + 0.25 * x1 + 0.2 * x2 + 0.05 * ai * x1 + 0.1 * ai * x2).clamp(0.0, 1.0);
                let yi = if g.random::<f64>() < p { 1.0 } else { 0.0 };
                l1.push(x1);
                l2.push(x2);
                a.push(ai);
                y.push(yi);
                z.push(normal(&mut g));
            }
            covariates.push(l1);
            covariates.push(l2);
        }
        _ => {
            let c = generator.exposure_scale();
            let mut l = Vec::with_capacity(n);
            for _ in 0..n {
                let li = 0.6 * normal(&mut g);
                let a1 = c * li * li + normal(&mut g);
                let a2 = -c * li * li + normal(&mut g);
                let yi = a1 + a2 + li + normal(&mut g);
                l.push(li);
                a.extend([a1, a2]);
                y.push(yi);
                z.extend([normal(&mut g), normal(&mut g)]);
            }
            covariates.push(l);
        }
    }

    let additive = |var: f64| -> Result<(Vec<f64>, MeCovariance)> {
        if !(var >= 0.0) {
            return Err(Error::Argument(format!("error variance {var} must be >= 0")));
        }
        let sd = var.sqrt();
        let star = a.iter().zip(&z).map(|(a, z)| a + sd * z).collect();
        Ok((star, MeCovariance::diagonal(&vec![var; m])?))
    };
    let (star, sigma) = match setting {
        Setting::Additive(var) => additive(var)?,
        Setting::Subcohort(_) => additive(generator.default_sigma().variance(0))?,
        Setting::EstimatedSigma { pilot_n, k } => {
            let var = generator.default_sigma().variance(0);
            let sd = var.sqrt();
            let star: Vec<f64> = a.iter().zip(&z).map(|(a, z)| a + sd * z).collect();
            let pilot = pilot_replicates(pilot_n, k, &|_, e| sd * e, seed, replicate)?;
            (star, estimate_me_covariance(&pilot, false)?)
        }
        Setting::Multiplicative {
            reliability,
            pilot_n,
            k,
        } => {
            let sd = multiplicative_variance(reliability)?.sqrt();
            let star: Vec<f64> = a.iter().zip(&z).map(|(a, z)| a * (1.0 + sd * z)).collect();
            let pilot = pilot_replicates(pilot_n, k, &|a, e| a * sd * e, seed, replicate)?;
            (star, estimate_me_covariance(&pilot, false)?)
        }
    };

    let names: &[&str] = match generator {
        Generator::Sim3 | Generator::TwoPhase => &["l1", "l2"],
        _ => &["l"],
    };
    let exposure_names: &[&str] = if m == 1 { &["a"] } else { &["a1", "a2"] };
    let build = |values: &[f64], extra: Option<(&[bool], &[bool])>| -> Result<Dataset> {
        let mut b = Dataset::builder().outcome(y.clone());
        for (name, col) in names.iter().zip(&covariates) {
            b = b.covariate(*name, col.clone());
        }
        for (j, name) in exposure_names.iter().enumerate() {
            b = b.exposure(*name, values.iter().skip(j).step_by(m).copied().collect());
        }
        if let Some((case, sel)) = extra {
            b = b.case_indicator(case.to_vec()).selected(sel.to_vec());
        }
        b.build()
    };

    if let Setting::Subcohort(fraction) = setting {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "sub-cohort fraction {fraction} must lie in (0, 1]"
            )));
        }
        let mut s = rng::stream(rng::derive_seed(seed, &[purpose::SUBCOHORT, replicate as u64]), 0);
        let case: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
        let selected: Vec<bool> = case.iter().map(|&c| s.random::<f64>() < fraction || c).collect();
        let observed = apply_two_phase(&build(&star, Some((&case, &selected)))?)?;
        let truth = apply_two_phase(&build(&a, Some((&case, &selected)))?)?;
        return Ok(Simulated { observed, truth, sigma });
    }
    Ok(Simulated {
        observed: build(&star, None)?,
        truth: build(&a, None)?,
        sigma,
    })
}

/// Pilot study of `pilot_n` subjects with `k` replicate measurements each of
/// the two `sim2` exposures. `error(a, e)` maps a true exposure and a standard
/// normal draw to the additive error of one measurement.
fn pilot_replicates(
    pilot_n: usize,
    k: usize,
    error: &dyn Fn(f64, f64) -> f64,
    seed: u64,
    replicate: usize,
) -> Result<Dataset> {
    if pilot_n == 0 || k < 2 {
        return Err(Error::Argument(
            "pilot study needs at least one subject and k >= 2".into(),
        ));
    }
    let mut g = rng::stream(rng::derive_seed(seed, &[purpose::PILOT, replicate as u64]), 0);
    let (mut a1, mut a2, mut group) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..pilot_n {
        let l = 0.6 * normal(&mut g);
        let t1 = l * l + normal(&mut g);
        let t2 = -l * l + normal(&mut g);
        for _ in 0..k {
            a1.push(t1 + error(t1, normal(&mut g)));
            a2.push(t2 + error(t2, normal(&mut g)));
            group.push(i as i64);
        }
    }
    Dataset::builder()
        .outcome(vec![0.0; a1.len()])
        .exposure("a1", a1)
        .exposure("a2", a2)
        .replicate_group(group)
        .build()
}

/// Replicate pilot data with additive `N(0, σ²)` errors on both `sim2`
/// exposures.
pub fn pilot_study(pilot_n: usize, k: usize, error_variance: f64, seed: u64, replicate: usize) -> Result<Dataset> {
    if !(error_variance >= 0.0) {
        return Err(Error::Argument(format!("error variance {error_variance} must be >= 0")));
    }
    let sd = error_variance.sqrt();
    pilot_replicates(pilot_n, k, &|_, e| sd * e, seed, replicate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim1_reliability_matches_design() {
        let r = Generator::Sim1.exposure_variance() / (Generator::Sim1.exposure_variance() + 0.05);
        assert!((r - 0.8696).abs() < 1e-3);
    }

    #[test]
    fn reliability_inverts_sim2_design() {
        let s = reliability_to_sigma(Generator::Sim2, 1.2592 / 1.4592).unwrap();
        assert!((s.variance(0) - 0.2).abs() < 1e-12 && (s.variance(1) - 0.2).abs() < 1e-12);
        assert!(reliability_to_sigma(Generator::Sim2, 1.0).unwrap().is_zero());
        let half = reliability_to_sigma(Generator::Sim1, 0.5).unwrap();
        assert!((half.variance(0) - Generator::Sim1.exposure_variance()).abs() < 1e-15);
        assert!(reliability_to_sigma(Generator::Sim2, 0.0).is_err());
        assert!(reliability_to_sigma(Generator::Sim2, 1.2).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(Generator::Sim2, Setting::Additive(0.2), 50, 9, 3).unwrap();
        let b = generate(Generator::Sim2, Setting::Additive(0.2), 50, 9, 3).unwrap();
        assert_eq!(a.observed.exposures(), b.observed.exposures());
        let c = generate(Generator::Sim2, Setting::Additive(0.2), 50, 9, 4).unwrap();
        assert_ne!(a.observed.exposures(), c.observed.exposures());
        let zero = generate(Generator::Sim2, Setting::Additive(0.0), 50, 9, 3).unwrap();
        assert_eq!(zero.observed.exposures(), zero.truth.exposures());
        assert_eq!(zero.truth.exposures(), a.truth.exposures());
    }

    #[test]
    fn two_phase_keeps_cases_and_weights_controls() {
        let s = generate(Generator::TwoPhase, Setting::Subcohort(0.25), 400, 1, 0).unwrap();
        let d = &s.observed;
        assert!(d.n() < 400);
        for i in 0..d.n() {
            if d.y()[i] == 1.0 {
                assert_eq!(d.weight(i), 1.0);
            } else {
                assert!(d.weight(i) > 2.0);
            }
        }
        assert_eq!(s.truth.n(), d.n());
    }

    #[test]
    fn unknown_design_lists_choices() {
        let e = "sim9".parse::<Generator>().unwrap_err().to_string();
        assert!(e.contains("reliability_sweep") && e.contains("two_phase"));
    }
}
