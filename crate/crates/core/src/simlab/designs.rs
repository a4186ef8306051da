//! Estimator line-ups and targets for the standard studies.

use super::{method_label, Cell, Generator, Setting};
use crate::error::{Error, Result};
use crate::estimators::{Correction, Estimate, EstimatorRequest, Propensity};
use crate::models::{Factor, Link, ModelSpec, PropensitySpec};

#[derive(Clone, Debug, PartialEq)]
pub enum TargetKind {
    /// Entry `index` of parameter block `block`.
    Theta { block: String, index: usize },
    /// Contrast `index` of the estimate.
    Contrast(usize),
    /// Dose-response value at grid point `index` (exposure `a`).
    DoseResponse { index: usize, a: f64 },
}

/// A scalar summary of a fit with its true value.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub name: String,
    pub kind: TargetKind,
    pub truth: f64,
}

impl Target {
    pub fn theta(name: &str, block: &str, index: usize, truth: f64) -> Self {
        Target {
            name: name.into(),
            kind: TargetKind::Theta {
                block: block.into(),
                index,
            },
            truth,
        }
    }

    pub fn contrast(name: &str, index: usize, truth: f64) -> Self {
        Target {
            name: name.into(),
            kind: TargetKind::Contrast(index),
            truth,
        }
    }

    pub(crate) fn point(&self) -> Option<f64> {
        match self.kind {
            TargetKind::DoseResponse { a, .. } => Some(a),
            _ => None,
        }
    }

    /// `(estimate, se_uc, se_bc)`.
    pub fn extract(&self, est: &Estimate) -> Result<(f64, f64, f64)> {
        let missing = || Error::Specification(format!("target `{}` is not produced by {}", self.name, est.name()));
        match &self.kind {
            TargetKind::Theta { block, index } => {
                let b = est.theta.block(block).ok_or_else(missing)?;
                if *index >= b.labels.len() {
                    return Err(missing());
                }
                let k = b.range.start + index;
                Ok((est.theta.values()[k], est.se_uc()[k], est.se_bc()[k]))
            }
            TargetKind::Contrast(i) => {
                let c = est.contrasts.get(*i).ok_or_else(missing)?;
                Ok((c.estimate, c.se_uc, c.se_bc))
            }
            TargetKind::DoseResponse { index, .. } => {
                let dr = est.dose_response.as_ref().ok_or_else(missing)?;
                if *index >= dr.estimate.len() {
                    return Err(missing());
                }
                Ok((dr.estimate[*index], dr.se_uc[*index], dr.se_bc[*index]))
            }
        }
    }
}

/// One estimator in a study cell.
#[derive(Clone, Debug)]
pub struct MethodRun {
    pub label: String,
    pub request: EstimatorRequest,
    pub targets: Vec<Target>,
}

impl MethodRun {
    pub fn new(request: EstimatorRequest, targets: Vec<Target>) -> Self {
        MethodRun {
            label: method_label(request.method, request.correction),
            request,
            targets,
        }
    }
}

fn x(name: &str) -> Factor {
    if name.starts_with('a') {
        Factor::exposure(name)
    } else {
        Factor::covariate(name)
    }
}

/// Product term from factor names.
fn term(names: &[&str]) -> Vec<Factor> {
    names.iter().map(|n| x(n)).collect()
}

fn sim1_truth(a: f64) -> f64 {
    0.25 * a + 0.5 * a * a - 0.5 * a.powi(3) + 0.5
}

fn sim1_methods(comparators: bool) -> Vec<MethodRun> {
    let outcome = ModelSpec::new(
        Link::Identity,
        vec![
            term(&["a"]),
            vec![Factor::exposure("a").pow(2)],
            vec![Factor::exposure("a").pow(3)],
            term(&["l"]),
        ],
    );
    // -1, -0.75, ..., 2
    let points: Vec<f64> = (0..13).map(|k| -1.0 + 0.25 * k as f64).collect();
    let grid: Vec<Vec<f64>> = points.iter().map(|&a| vec![a]).collect();
    let targets: Vec<Target> = points
        .iter()
        .enumerate()
        .map(|(index, &a)| Target {
            name: format!("eta({a})"),
            kind: TargetKind::DoseResponse { index, a },
            truth: sim1_truth(a),
        })
        .collect();
    corrections(comparators)
        .into_iter()
        .map(|c| {
            MethodRun::new(
                EstimatorRequest::gformula(outcome.clone(), grid.clone()).with_correction(c),
                targets.clone(),
            )
        })
        .collect()
}

fn corrections(comparators: bool) -> Vec<Correction> {
    let mut out = vec![Correction::Oracle, Correction::Naive, Correction::Cs];
    if comparators {
        out.extend([Correction::Rc, Correction::Simex]);
    }
    out
}

fn sim2_request(correction: Correction) -> EstimatorRequest {
    let msm = ModelSpec::new(Link::Identity, vec![term(&["a1"]), term(&["a2"])]);
    let l2 = vec![Factor::covariate("l").pow(2)];
    let ps = Propensity::Estimated(vec![
        PropensitySpec::new("a1", vec![l2.clone()]),
        PropensitySpec::new("a2", vec![l2]),
    ]);
    EstimatorRequest::ipw(msm, ps).with_correction(correction)
}

fn sim2_targets() -> Vec<Target> {
    vec![
        Target::theta("gamma0", "gamma", 0, 0.0),
        Target::theta("gamma1", "gamma", 1, 1.0),
        Target::theta("gamma2", "gamma", 2, 1.0),
    ]
}

fn sim2_methods(corr: &[Correction]) -> Vec<MethodRun> {
    corr.iter()
        .map(|&c| MethodRun::new(sim2_request(c), sim2_targets()))
        .collect()
}

/// `(outcome, propensity)` for sim3-type data with each model correct or
/// missing `L1` (and, for the outcome, `A·L1`).
fn sim3_models(or_correct: bool, ps_correct: bool) -> (ModelSpec, Propensity) {
    let outcome_terms = if or_correct {
        vec![
            term(&["a"]),
            term(&["l1"]),
            term(&["l2"]),
            term(&["a", "l1"]),
            term(&["a", "l2"]),
        ]
    } else {
        vec![term(&["a"]), term(&["l2"]), term(&["a", "l2"])]
    };
    let ps_terms = if ps_correct {
        vec![term(&["l1"]), term(&["l2"])]
    } else {
        vec![term(&["l2"])]
    };
    (
        ModelSpec::new(Link::Identity, outcome_terms),
        Propensity::Estimated(vec![PropensitySpec::new("a", ps_terms)]),
    )
}

const SIM3_GAMMA1: f64 = 0.175;

/// DR, g-formula or IPW estimator of `γ₁` on sim3-type data.
pub fn sim3_run(
    method: crate::estimators::Method,
    correction: Correction,
    or_correct: bool,
    ps_correct: bool,
) -> MethodRun {
    use crate::estimators::Method;
    let (outcome, ps) = sim3_models(or_correct, ps_correct);
    let grid = vec![vec![0.0], vec![1.0]];
    match method {
        Method::Ipw => {
            let msm = ModelSpec::new(Link::Identity, vec![term(&["a"])]);
            MethodRun::new(
                EstimatorRequest::ipw(msm, ps).with_correction(correction),
                vec![Target::theta("gamma1", "gamma", 1, SIM3_GAMMA1)],
            )
        }
        Method::Gformula => MethodRun::new(
            EstimatorRequest::gformula(outcome, grid)
                .with_contrasts(vec![(1, 0)])
                .with_correction(correction),
            vec![Target::contrast("gamma1", 0, SIM3_GAMMA1)],
        ),
        Method::Dr => MethodRun::new(
            EstimatorRequest::dr(outcome, ps, grid)
                .with_contrasts(vec![(1, 0)])
                .with_correction(correction),
            vec![Target::contrast("gamma1", 0, SIM3_GAMMA1)],
        ),
    }
}

pub(crate) fn standard_cells(generator: Generator, comparators: bool) -> Vec<Cell> {
    use crate::estimators::Method;
    let base = Setting::Additive(generator.default_sigma().variance(0));
    let single = |methods: Vec<MethodRun>| {
        vec![Cell {
            label: "base".into(),
            setting: base,
            methods,
        }]
    };
    match generator {
        Generator::Sim1 => single(sim1_methods(comparators)),
        Generator::Sim2 => single(sim2_methods(&corrections(comparators))),
        Generator::Positivity => single(sim2_methods(&corrections(false))),
        Generator::Sim3 => [
            ("PS and OR", true, true),
            ("PS only", false, true),
            ("OR only", true, false),
            ("Neither", false, false),
        ]
        .into_iter()
        .map(|(label, or, ps)| Cell {
            label: label.into(),
            setting: base,
            methods: [Method::Dr, Method::Gformula, Method::Ipw]
                .into_iter()
                .map(|m| sim3_run(m, Correction::Cs, or, ps))
                .collect(),
        })
        .collect(),
        Generator::ReliabilitySweep => [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
            .into_iter()
            .map(|r| reliability_cell(generator, r))
            .collect(),
        Generator::EstimatedSigma => [20, 50, 100, 500, 1000]
            .into_iter()
            .map(|pilot_n| Cell {
                label: format!("n_p={pilot_n}"),
                setting: Setting::EstimatedSigma { pilot_n, k: 5 },
                methods: sim2_methods(&[Correction::Naive, Correction::Cs]),
            })
            .collect(),
        Generator::Multiplicative => [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
            .into_iter()
            .map(|reliability| Cell {
                label: format!("r={reliability}"),
                setting: Setting::Multiplicative {
                    reliability,
                    pilot_n: 100,
                    k: 5,
                },
                methods: sim2_methods(&[Correction::Naive, Correction::Cs]),
            })
            .collect(),
        Generator::TwoPhase => [0.05, 0.10, 0.25, 0.5, 1.0]
            .into_iter()
            .map(|f| two_phase_cell(f))
            .collect(),
    }
}

/// Naive and CS IPW at reliability `r`.
pub fn reliability_cell(generator: Generator, r: f64) -> Cell {
    let v = generator.exposure_variance() * (1.0 - r) / r;
    Cell {
        label: format!("r={r}"),
        setting: Setting::Additive(v),
        methods: sim2_methods(&[Correction::Naive, Correction::Cs]),
    }
}

/// Oracle, naive and CS DR with both models correct under a sub-cohort of
/// fraction `f`.
pub fn two_phase_cell(f: f64) -> Cell {
    use crate::estimators::Method;
    Cell {
        label: format!("subcohort={}%", f * 100.0),
        setting: Setting::Subcohort(f),
        methods: [Correction::Oracle, Correction::Naive, Correction::Cs]
            .into_iter()
            .map(|c| sim3_run(Method::Dr, c, true, true))
            .collect(),
    }
}
