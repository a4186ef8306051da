//! CSV and JSON writers for the CLI.

use std::path::Path;

use serde::Serialize;

use super::VERSION;
use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::simlab::StudyOutput;

/// Provenance written at the top of every output file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub n: usize,
    pub alpha: f64,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: &str, seed: u64, n: usize, alpha: f64) -> Self {
        Manifest {
            tool: "cscausal",
            version: VERSION,
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
            n,
            alpha,
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# {} {} config_sha256={} seed={}\n",
            self.tool, self.version, self.config_sha256, self.seed
        )
    }
}

/// In-memory CSV with the manifest line on top.
struct Table {
    buf: Vec<u8>,
}

impl Table {
    fn new(manifest: &Manifest, header: &[String]) -> Self {
        let mut t = Table {
            buf: manifest.comment_line().into_bytes(),
        };
        t.row(header.iter().cloned());
        t
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let fields: Vec<String> = fields.into_iter().collect();
        w.write_record(&fields).expect("writing to memory");
        self.buf.extend(w.into_inner().expect("writing to memory"));
    }

    fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.buf)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn num(v: f64) -> String {
    v.to_string()
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

const INTERVAL: [&str; 7] = [
    "estimate",
    "se_uc",
    "se_bc",
    "ci_uc_lower",
    "ci_uc_upper",
    "ci_bc_lower",
    "ci_bc_upper",
];

fn interval(est: f64, se_uc: f64, se_bc: f64, ci_uc: (f64, f64), ci_bc: (f64, f64)) -> [String; 7] {
    [est, se_uc, se_bc, ci_uc.0, ci_uc.1, ci_bc.0, ci_bc.1].map(num)
}

fn wald(est: &Estimate, v: f64, se: f64) -> (f64, f64) {
    crate::mestim::wald_ci(v, se, est.alpha).unwrap_or((f64::NAN, f64::NAN))
}

fn estimates_table(manifest: &Manifest, fits: &[(String, Estimate)]) -> Table {
    let mut header = strings(&["estimator", "method", "correction", "block", "parameter"]);
    header.extend(strings(&INTERVAL));
    let mut t = Table::new(manifest, &header);
    for (label, est) in fits {
        let (su, sb) = (est.se_uc(), est.se_bc());
        let values = est.theta.values();
        for block in est.theta.blocks() {
            for (j, name) in block.labels.iter().enumerate() {
                let k = block.range.start + j;
                let v = values[k];
                let mut row = vec![
                    label.clone(),
                    est.method.to_string(),
                    est.correction.to_string(),
                    block.name.clone(),
                    name.clone(),
                ];
                row.extend(interval(v, su[k], sb[k], wald(est, v, su[k]), wald(est, v, sb[k])));
                t.row(row);
            }
        }
        let points = est.dose_response.as_ref().map(|d| d.points.as_slice()).unwrap_or(&[]);
        for c in &est.contrasts {
            let mut row = vec![
                label.clone(),
                est.method.to_string(),
                est.correction.to_string(),
                "contrast".into(),
                format!(
                    "eta({})-eta({})",
                    point_label(&points[c.first]),
                    point_label(&points[c.second])
                ),
            ];
            row.extend(interval(c.estimate, c.se_uc, c.se_bc, c.ci_uc, c.ci_bc));
            t.row(row);
        }
    }
    t
}

fn point_label(a: &[f64]) -> String {
    a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn curve_header(data: &Dataset, lead: &[&str]) -> Vec<String> {
    let mut header = strings(lead);
    header.extend(data.exposure_names().iter().cloned());
    header.extend(strings(&INTERVAL));
    header
}

fn curve_rows(t: &mut Table, lead: Vec<String>, est: &Estimate) {
    let Some(dr) = &est.dose_response else { return };
    for g in 0..dr.points.len() {
        let mut row = lead.clone();
        row.extend(dr.points[g].iter().copied().map(num));
        row.extend(interval(
            dr.estimate[g],
            dr.se_uc[g],
            dr.se_bc[g],
            dr.ci_uc[g],
            dr.ci_bc[g],
        ));
        t.row(row);
    }
}

#[derive(Serialize)]
struct CovarianceFile<'a> {
    manifest: &'a Manifest,
    sigma: Vec<Vec<f64>>,
    estimators: Vec<CovarianceEntry>,
}

#[derive(Serialize)]
struct CovarianceEntry {
    estimator: String,
    converged: bool,
    iterations: usize,
    max_residual: f64,
    parameters: Vec<String>,
    theta: Vec<f64>,
    vcov_uc: Option<Vec<Vec<f64>>>,
    vcov_bc: Option<Vec<Vec<f64>>>,
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// `estimates.csv`, `dose_response.csv`, `covariance.json`, `manifest.json`.
pub fn write_fit(
    dir: &Path,
    manifest: &Manifest,
    data: &Dataset,
    sigma: &MeCovariance,
    fits: &[(String, Estimate)],
) -> Result<()> {
    create_dir(dir)?;
    estimates_table(manifest, fits).save(&dir.join("estimates.csv"))?;
    let mut curves = Table::new(manifest, &curve_header(data, &["estimator"]));
    for (label, est) in fits {
        curve_rows(&mut curves, vec![label.clone()], est);
    }
    curves.save(&dir.join("dose_response.csv"))?;
    let cov = CovarianceFile {
        manifest,
        sigma: sigma.to_rows(),
        estimators: fits
            .iter()
            .map(|(label, est)| CovarianceEntry {
                estimator: label.clone(),
                converged: est.converged,
                iterations: est.iterations,
                max_residual: est.max_residual,
                parameters: est.theta.names(),
                theta: est.theta.values().to_vec(),
                vcov_uc: est.vcov_uc.as_ref().map(matrix_rows),
                vcov_bc: est.vcov_bc.as_ref().map(matrix_rows),
            })
            .collect(),
    };
    write_file(&dir.join("covariance.json"), &json(&cov)?)?;
    write_file(&dir.join("manifest.json"), &json(manifest)?)
}

/// One stacked curve per `(estimator, Σ scale)`.
pub fn write_sensitivity(
    dir: &Path,
    manifest: &Manifest,
    data: &Dataset,
    cells: &[(String, f64, Estimate)],
) -> Result<()> {
    create_dir(dir)?;
    let mut t = Table::new(manifest, &curve_header(data, &["estimator", "sigma_scale"]));
    for (label, scale, est) in cells {
        curve_rows(&mut t, vec![label.clone(), num(*scale)], est);
    }
    t.save(&dir.join("sensitivity.csv"))?;
    let fits: Vec<(String, Estimate)> = cells
        .iter()
        .map(|(label, scale, est)| (format!("{label}@{scale}"), est.clone()))
        .collect();
    estimates_table(manifest, &fits).save(&dir.join("estimates.csv"))?;
    write_file(&dir.join("manifest.json"), &json(manifest)?)
}

fn fixed(v: f64) -> String {
    format!("{v:.3}")
}

/// `metrics.csv`, `dose_response_bias.csv` for dose-response designs, and
/// `replicates.csv` with `audit`.
pub fn write_simulation(dir: &Path, manifest: &Manifest, out: &StudyOutput, audit: bool) -> Result<()> {
    create_dir(dir)?;
    let table = &out.table;
    let mut t = Table::new(
        manifest,
        &strings(&[
            "generator",
            "n",
            "cell",
            "setting",
            "method",
            "parameter",
            "truth",
            "successes",
            "failures",
            "bias",
            "ese",
            "ase_uc",
            "cov_uc",
            "ase_bc",
            "cov_bc",
        ]),
    );
    for r in &table.rows {
        t.row([
            table.generator.id().to_string(),
            table.n.to_string(),
            r.cell.clone(),
            num(r.setting),
            r.method.clone(),
            r.parameter.clone(),
            num(r.truth),
            r.successes.to_string(),
            r.failures.to_string(),
            fixed(r.bias),
            fixed(r.ese),
            fixed(r.ase_uc),
            fixed(r.cov_uc),
            fixed(r.ase_bc),
            fixed(r.cov_bc),
        ]);
    }
    t.save(&dir.join("metrics.csv"))?;
    let curve = table.dose_response_bias();
    if !curve.is_empty() {
        let mut t = Table::new(manifest, &strings(&["a", "method", "bias"]));
        for (a, method, bias) in curve {
            t.row([num(a), method, fixed(bias)]);
        }
        t.save(&dir.join("dose_response_bias.csv"))?;
    }
    if audit {
        let mut t = Table::new(
            manifest,
            &strings(&[
                "cell",
                "replicate",
                "method",
                "parameter",
                "estimate",
                "se_uc",
                "se_bc",
                "converged",
                "error",
            ]),
        );
        for r in &out.records {
            t.row([
                r.cell.clone(),
                r.replicate.to_string(),
                r.method.clone(),
                r.parameter.clone(),
                num(r.estimate),
                num(r.se_uc),
                num(r.se_bc),
                r.converged.to_string(),
                r.error.clone().unwrap_or_default(),
            ]);
        }
        t.save(&dir.join("replicates.csv"))?;
    }
    write_file(&dir.join("manifest.json"), &json(manifest)?)
}
