use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A named contiguous slice of the parameter vector, e.g. `beta` or `eta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub range: Range<usize>,
    /// One label per element, e.g. the design term or grid point.
    pub labels: Vec<String>,
}

/// Parameter values with named blocks that partition the index range.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    blocks: Vec<ParamBlock>,
}

impl ParameterVector {
    /// Blocks are laid out in the given order; `blocks` pairs a name with
    /// its element labels.
    pub fn new(values: Vec<f64>, blocks: Vec<(String, Vec<String>)>) -> Result<Self> {
        let mut out = Vec::with_capacity(blocks.len());
        let mut start = 0;
        for (name, labels) in blocks {
            if out.iter().any(|b: &ParamBlock| b.name == name) {
                return Err(Error::Specification(format!("duplicate parameter block `{name}`")));
            }
            let end = start + labels.len();
            out.push(ParamBlock {
                name,
                range: start..end,
                labels,
            });
            start = end;
        }
        if start != values.len() {
            return Err(Error::Dimension(format!(
                "parameter blocks cover {start} entries, vector has {}",
                values.len()
            )));
        }
        Ok(ParameterVector { values, blocks: out })
    }

    /// Same layout with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Dimension("parameter vector length changed".into()));
        }
        Ok(ParameterVector {
            values,
            blocks: self.blocks.clone(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_values(&self, name: &str) -> Option<&[f64]> {
        self.block(name).map(|b| &self.values[b.range.clone()])
    }

    /// `block[label]` style names for every element.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.len()];
        for b in &self.blocks {
            for (k, idx) in b.range.clone().enumerate() {
                out[idx] = format!("{}[{}]", b.name, b.labels[k]);
            }
        }
        out
    }
}

/// Root of a stacked estimating equation with its sandwich covariances.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta_hat: ParameterVector,
    /// Empirical sandwich covariance.
    pub vcov_uc: DMatrix<f64>,
    /// Fay-Graubard bias-corrected sandwich covariance.
    pub vcov_bc: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `max_j |Σ_i ψ_ij(θ̂)|`.
    pub max_residual: f64,
}

impl FitResult {
    pub fn se_uc(&self) -> Vec<f64> {
        self.vcov_uc.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    pub fn se_bc(&self) -> Vec<f64> {
        self.vcov_bc.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_partition_the_vector() {
        let p = ParameterVector::new(
            vec![1.0, 2.0, 3.0],
            vec![
                ("beta".into(), vec!["(Intercept)".into(), "A".into()]),
                ("eta".into(), vec!["1".into()]),
            ],
        )
        .unwrap();
        assert_eq!(p.block_values("beta"), Some(&[1.0, 2.0][..]));
        assert_eq!(p.block("eta").unwrap().range, 2..3);
        assert_eq!(p.names()[2], "eta[1]");
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(ParameterVector::new(vec![1.0], vec![("a".into(), vec![])]).is_err());
        assert!(ParameterVector::new(
            vec![1.0, 2.0],
            vec![("a".into(), vec!["x".into()]), ("a".into(), vec!["y".into()])]
        )
        .is_err());
    }
}
