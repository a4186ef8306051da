//! Simulation laboratory: data generators for the study designs, a
//! replicate runner and metric tables (Bias, ESE, ASE, coverage, all ×100).

mod designs;
mod generators;

use std::collections::HashMap;

use rayon::prelude::*;

pub use designs::{reliability_cell, sim3_run, two_phase_cell, MethodRun, Target, TargetKind};
pub use generators::{
    generate, multiplicative_variance, pilot_study, reliability_to_sigma, Generator, Setting, Simulated,
};

use crate::data::MeCovariance;
use crate::error::{Error, Result};
use crate::estimators::{self, Correction, Estimate, EstimatorRequest, Method};
use crate::mestim::normal_quantile;
use crate::rng;

/// A group of estimators fitted to the same generated data.
#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub setting: Setting,
    pub methods: Vec<MethodRun>,
}

#[derive(Clone, Debug)]
pub struct StudyDesign {
    pub generator: Generator,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub cells: Vec<Cell>,
    pub alpha: f64,
}

impl StudyDesign {
    /// The standard design for `generator`. With `comparators`, regression
    /// calibration and SIMEX are added where the base studies use them.
    pub fn standard(generator: Generator, n: usize, replicates: usize, seed: u64, comparators: bool) -> Self {
        StudyDesign {
            generator,
            n,
            replicates,
            seed,
            cells: designs::standard_cells(generator, comparators),
            alpha: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Argument("R must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::Argument("n must be at least 1".into()));
        }
        if self.cells.iter().all(|c| c.methods.is_empty()) {
            return Err(Error::Argument("study has no estimators".into()));
        }
        Ok(())
    }
}

/// One `(cell, method, parameter)` row of aggregated metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub cell: String,
    pub setting: f64,
    pub method: String,
    pub parameter: String,
    /// Grid point for dose-response targets.
    pub point: Option<f64>,
    pub truth: f64,
    pub successes: usize,
    pub failures: usize,
    pub bias: f64,
    pub ese: f64,
    pub ase_uc: f64,
    pub cov_uc: f64,
    pub ase_bc: f64,
    pub cov_bc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsTable {
    pub generator: Generator,
    pub n: usize,
    pub replicates: usize,
    pub rows: Vec<MetricsRow>,
    /// Some row lost more than 5% of its replicates to fitting failures.
    pub warning: bool,
}

impl MetricsTable {
    pub fn row(&self, cell: &str, method: &str, parameter: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.cell == cell && r.method == method && r.parameter == parameter)
    }

    /// `(a, method, bias×100)` for every dose-response target.
    pub fn dose_response_bias(&self) -> Vec<(f64, String, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.point.map(|a| (a, r.method.clone(), r.bias)))
            .collect()
    }
}

/// Per-replicate estimate of one target.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub cell: String,
    pub replicate: usize,
    pub method: String,
    pub parameter: String,
    pub estimate: f64,
    pub se_uc: f64,
    pub se_bc: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct StudyOutput {
    pub table: MetricsTable,
    pub records: Vec<ReplicateRecord>,
}

fn fit_key(run: &MethodRun, setting: &Setting) -> String {
    let req = &run.request;
    // parts a method does not read are dropped so equal fits share a key
    let outcome = if req.method == Method::Ipw {
        None
    } else {
        req.outcome.as_ref()
    };
    let propensity = if req.method == Method::Gformula {
        None
    } else {
        Some(&req.propensity)
    };
    format!(
        "{setting:?}|{}|{}|{outcome:?}|{:?}|{propensity:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
        req.method, req.correction, req.msm, req.grid, req.contrasts, req.mccs, req.simex, req.truncation
    )
}

/// Fits every `(replicate, cell, method)` and aggregates the metrics.
/// Replicates run in parallel; results do not depend on the thread count.
pub fn run_study(design: &StudyDesign) -> Result<StudyOutput> {
    design.validate()?;
    let per_replicate: Vec<Result<Vec<ReplicateRecord>>> = (0..design.replicates)
        .into_par_iter()
        .map(|r| run_replicate(design, r))
        .collect();
    let mut records = Vec::new();
    for rs in per_replicate {
        records.extend(rs?);
    }
    let table = aggregate(design, &records)?;
    Ok(StudyOutput { table, records })
}

fn run_replicate(design: &StudyDesign, r: usize) -> Result<Vec<ReplicateRecord>> {
    let mut data: Vec<(Setting, Simulated)> = Vec::new();
    let mut fits: HashMap<String, std::result::Result<Estimate, String>> = HashMap::new();
    let mut out = Vec::new();
    for (c, cell) in design.cells.iter().enumerate() {
        let sim = match data.iter().position(|(s, _)| *s == cell.setting) {
            Some(k) => &data[k].1,
            None => {
                let sim = generate(design.generator, cell.setting, design.n, design.seed, r)?;
                data.push((cell.setting, sim));
                &data.last().expect("just pushed").1
            }
        };
        for (k, run) in cell.methods.iter().enumerate() {
            let key = fit_key(run, &cell.setting);
            let result = fits.entry(key).or_insert_with(|| {
                let req = EstimatorRequest {
                    seed: rng::derive_seed(design.seed, &[rng::purpose::MISC, r as u64, c as u64, k as u64]),
                    alpha: design.alpha,
                    ..run.request.clone()
                };
                let (data, sigma) = match req.correction {
                    Correction::Oracle => (&sim.truth, MeCovariance::zero(sim.truth.m())),
                    _ => (&sim.observed, sim.sigma.clone()),
                };
                estimators::fit(&req, data, &sigma).map_err(|e| e.to_string())
            });
            for target in &run.targets {
                let mut rec = ReplicateRecord {
                    cell: cell.label.clone(),
                    replicate: r,
                    method: run.label.clone(),
                    parameter: target.name.clone(),
                    estimate: f64::NAN,
                    se_uc: f64::NAN,
                    se_bc: f64::NAN,
                    converged: false,
                    error: None,
                };
                match result {
                    Ok(est) => {
                        let (v, su, sb) = target.extract(est)?;
                        rec.estimate = v;
                        rec.se_uc = su;
                        rec.se_bc = sb;
                        rec.converged = est.converged && v.is_finite();
                    }
                    Err(msg) => rec.error = Some(msg.clone()),
                }
                out.push(rec);
            }
        }
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn aggregate(design: &StudyDesign, records: &[ReplicateRecord]) -> Result<MetricsTable> {
    let z = normal_quantile(design.alpha)?;
    let mut rows = Vec::new();
    let mut warning = false;
    let mut by_key: HashMap<(&str, &str, &str), Vec<&ReplicateRecord>> = HashMap::new();
    for rec in records {
        by_key
            .entry((rec.cell.as_str(), rec.method.as_str(), rec.parameter.as_str()))
            .or_default()
            .push(rec);
    }
    for cell in &design.cells {
        for run in &cell.methods {
            for target in &run.targets {
                let recs = by_key
                    .get(&(cell.label.as_str(), run.label.as_str(), target.name.as_str()))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                let ok: Vec<&&ReplicateRecord> = recs.iter().filter(|r| r.converged).collect();
                let failures = design.replicates - ok.len();
                if failures as f64 > 0.05 * design.replicates as f64 {
                    warning = true;
                }
                let err: Vec<f64> = ok.iter().map(|r| r.estimate - target.truth).collect();
                let est: Vec<f64> = ok.iter().map(|r| r.estimate).collect();
                let (bias, ese) = if ok.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    let m = mean(&est);
                    let ss: f64 = est.iter().map(|v| (v - m).powi(2)).sum();
                    let sd = if ok.len() > 1 {
                        (ss / (ok.len() - 1) as f64).sqrt()
                    } else {
                        0.0
                    };
                    (100.0 * mean(&err), 100.0 * sd)
                };
                let cover = |se: &dyn Fn(&ReplicateRecord) -> f64| -> (f64, f64) {
                    if ok.is_empty() {
                        return (f64::NAN, f64::NAN);
                    }
                    let ses: Vec<f64> = ok.iter().map(|r| se(r)).collect();
                    let hits = ok
                        .iter()
                        .zip(&ses)
                        .filter(|(r, s)| (r.estimate - target.truth).abs() <= z * **s)
                        .count();
                    if ses.iter().any(|s| !s.is_finite()) {
                        return (f64::NAN, f64::NAN);
                    }
                    (100.0 * mean(&ses), 100.0 * hits as f64 / ok.len() as f64)
                };
                let (ase_uc, cov_uc) = cover(&|r| r.se_uc);
                let (ase_bc, cov_bc) = cover(&|r| r.se_bc);
                rows.push(MetricsRow {
                    cell: cell.label.clone(),
                    setting: cell.setting.value(),
                    method: run.label.clone(),
                    parameter: target.name.clone(),
                    point: target.point(),
                    truth: target.truth,
                    successes: ok.len(),
                    failures,
                    bias,
                    ese,
                    ase_uc,
                    cov_uc,
                    ase_bc,
                    cov_bc,
                });
            }
        }
    }
    Ok(MetricsTable {
        generator: design.generator,
        n: design.n,
        replicates: design.replicates,
        rows,
        warning,
    })
}

/// Short display name, e.g. `CS DR`.
pub fn method_label(method: Method, correction: Correction) -> String {
    let c = match correction {
        Correction::Oracle => "Oracle",
        Correction::Naive => "Naive",
        Correction::Cs => "CS",
        Correction::Rc => "RC",
        Correction::Simex => "SIMEX",
    };
    let m = match method {
        Method::Gformula => "G-Formula",
        Method::Ipw => "IPW",
        Method::Dr => "DR",
    };
    format!("{c} {m}")
}

#[cfg(test)]
mod tests;
