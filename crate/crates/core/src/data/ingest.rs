//! CSV ingestion driven by a column-role map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Maps CSV header names to dataset roles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub outcome: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub exposures: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_group: Option<String>,
}

pub fn read_csv(path: &Path, roles: &ColumnRoles) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv_from(file, roles)
}

pub fn read_csv_from<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in CSV header")))
    };

    let y_idx = col(&roles.outcome)?;
    let cov_idx = roles.covariates.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let exp_idx = roles.exposures.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let w_idx = roles.sample_weight.as_deref().map(col).transpose()?;
    let case_idx = roles.case.as_deref().map(col).transpose()?;
    let sel_idx = roles.selected.as_deref().map(col).transpose()?;
    let grp_idx = roles.replicate_group.as_deref().map(col).transpose()?;

    let mut y = Vec::new();
    let mut covs = vec![Vec::new(); cov_idx.len()];
    let mut exps = vec![Vec::new(); exp_idx.len()];
    let mut w = Vec::new();
    let mut case = Vec::new();
    let mut sel = Vec::new();
    let mut grp = Vec::new();

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let num = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            parse_number(raw).ok_or_else(|| {
                Error::Data(format!(
                    "line {line}, column `{}`: `{raw}` is not a number",
                    &headers[idx]
                ))
            })
        };
        y.push(num(y_idx)?);
        for (k, &c) in cov_idx.iter().enumerate() {
            covs[k].push(num(c)?);
        }
        for (k, &c) in exp_idx.iter().enumerate() {
            exps[k].push(num(c)?);
        }
        if let Some(c) = w_idx {
            w.push(num(c)?);
        }
        if let Some(c) = case_idx {
            case.push(parse_flag(num(c)?, &headers[c], line)?);
        }
        if let Some(c) = sel_idx {
            sel.push(parse_flag(num(c)?, &headers[c], line)?);
        }
        if let Some(c) = grp_idx {
            let v = num(c)?;
            if v.fract() != 0.0 {
                return Err(Error::Data(format!(
                    "line {line}, column `{}`: replicate group must be an integer",
                    &headers[c]
                )));
            }
            grp.push(v as i64);
        }
    }

    let mut b = Dataset::builder().outcome(y);
    for (name, values) in roles.covariates.iter().zip(covs) {
        b = b.covariate(name.clone(), values);
    }
    for (name, values) in roles.exposures.iter().zip(exps) {
        b = b.exposure(name.clone(), values);
    }
    if w_idx.is_some() {
        b = b.sample_weight(w);
    }
    if case_idx.is_some() {
        b = b.case_indicator(case);
    }
    if sel_idx.is_some() {
        b = b.selected(sel);
    }
    if grp_idx.is_some() {
        b = b.replicate_group(grp);
    }
    b.build()
}

/// Period-decimal parsing; rejects empty cells and NA markers.
fn parse_number(raw: &str) -> Option<f64> {
    let v: f64 = raw.parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_flag(v: f64, column: &str, line: usize) -> Result<bool> {
    match v {
        x if x == 0.0 => Ok(false),
        x if x == 1.0 => Ok(true),
        _ => Err(Error::Data(format!("line {line}, column `{column}`: expected 0 or 1"))),
    }
}
