//! Replicate-based `Σ` estimation, two-phase weights and sensitivity grids.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{fit, Estimate, EstimatorRequest};
use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};

/// Pooled within-subject covariance of replicate exposure measurements.
///
/// Rows sharing a `replicate_group` value are repeated measurements on one
/// subject. With `diagonal`, off-diagonal entries are set to zero.
pub fn estimate_me_covariance(data: &Dataset, diagonal: bool) -> Result<MeCovariance> {
    let groups = data
        .replicate_group()
        .ok_or_else(|| Error::Data("data has no replicate-group column".into()))?;
    let m = data.m();
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut sum = DMatrix::<f64>::zeros(m, m);
    let mut dof = 0usize;
    let mut dev = vec![0.0; m];
    for rows in members.values().filter(|r| r.len() >= 2) {
        let mut mean = vec![0.0; m];
        for &i in rows {
            for (acc, v) in mean.iter_mut().zip(data.exposure_row(i)) {
                *acc += v;
            }
        }
        for v in mean.iter_mut() {
            *v /= rows.len() as f64;
        }
        for &i in rows {
            for (d, (v, mu)) in dev.iter_mut().zip(data.exposure_row(i).iter().zip(&mean)) {
                *d = v - mu;
            }
            for a in 0..m {
                for b in 0..m {
                    sum[(a, b)] += dev[a] * dev[b];
                }
            }
        }
        dof += rows.len() - 1;
    }
    if dof == 0 {
        return Err(Error::InsufficientReplicates);
    }
    let mut sigma = sum / dof as f64;
    if diagonal {
        sigma = DMatrix::from_diagonal(&sigma.diagonal());
    }
    MeCovariance::new((&sigma + sigma.transpose()) * 0.5)
}

/// Inverse probability of selection within case and non-case strata, for
/// every row (zero for unselected rows).
pub fn two_phase_weights(data: &Dataset) -> Result<Vec<f64>> {
    let case = data
        .case_indicator()
        .ok_or_else(|| Error::Data("two-phase weights need a case indicator".into()))?;
    let selected = data
        .selected()
        .ok_or_else(|| Error::Data("two-phase weights need a selection indicator".into()))?;
    let mut total = [0usize; 2];
    let mut chosen = [0usize; 2];
    for (&c, &s) in case.iter().zip(selected) {
        total[c as usize] += 1;
        chosen[c as usize] += s as usize;
    }
    for (k, name) in [(0, "non-cases"), (1, "cases")] {
        if total[k] > 0 && chosen[k] == 0 {
            return Err(Error::DegenerateStratum(name.into()));
        }
    }
    Ok(case
        .iter()
        .zip(selected)
        .map(|(&c, &s)| {
            let k = c as usize;
            if s {
                total[k] as f64 / chosen[k] as f64
            } else {
                0.0
            }
        })
        .collect())
}

/// Keeps the selected rows and attaches their two-phase weights, multiplied
/// into any existing sample weights.
pub fn apply_two_phase(data: &Dataset) -> Result<Dataset> {
    let w = two_phase_weights(data)?;
    let rows: Vec<usize> = (0..data.n()).filter(|&i| w[i] > 0.0).collect();
    let weights: Vec<f64> = rows.iter().map(|&i| w[i] * data.weight(i)).collect();
    data.select_rows(&rows)?.with_sample_weight(weights)
}

/// One fit per `Σ`, everything else shared. Failed cells are returned as
/// errors in place.
pub fn sensitivity_grid(req: &EstimatorRequest, data: &Dataset, sigmas: &[MeCovariance]) -> Vec<Result<Estimate>> {
    sigmas.par_iter().map(|s| fit(req, data, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn replicates(a: Vec<f64>, groups: Vec<i64>) -> Dataset {
        Dataset::builder()
            .outcome(vec![0.0; a.len()])
            .exposure("a", a)
            .replicate_group(groups)
            .build()
            .unwrap()
    }

    #[test]
    fn two_replicates_give_the_pooled_variance() {
        let d = replicates(vec![0.0, 2.0], vec![1, 1]);
        let s = estimate_me_covariance(&d, false).unwrap();
        assert!((s.variance(0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_replicates_give_zero() {
        let d = replicates(vec![1.5, 1.5, -0.2, -0.2, 3.0], vec![1, 1, 2, 2, 3]);
        let s = estimate_me_covariance(&d, true).unwrap();
        assert!(s.is_zero());
    }

    #[test]
    fn singletons_are_insufficient() {
        let d = replicates(vec![1.0, 2.0], vec![1, 2]);
        assert!(matches!(
            estimate_me_covariance(&d, false),
            Err(Error::InsufficientReplicates)
        ));
    }

    fn two_phase(case: Vec<bool>, selected: Vec<bool>) -> Dataset {
        let n = case.len();
        Dataset::builder()
            .outcome(vec![0.0; n])
            .exposure("a", (0..n).map(|i| i as f64).collect())
            .case_indicator(case)
            .selected(selected)
            .build()
            .unwrap()
    }

    #[test]
    fn reciprocal_selection_proportions() {
        let case = vec![true, true, false, false, false, false, false, false, false, false];
        let sel = vec![true, true, true, false, false, false, true, false, false, false];
        let w = two_phase_weights(&two_phase(case.clone(), sel)).unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[2], 4.0);
        assert_eq!(w[3], 0.0);
        let all = two_phase_weights(&two_phase(case.clone(), vec![true; 10])).unwrap();
        assert!(all.iter().all(|&v| v == 1.0));
        let mut none = vec![false; 10];
        none[0] = true;
        assert!(matches!(
            two_phase_weights(&two_phase(case, none)),
            Err(Error::DegenerateStratum(_))
        ));
    }
}
