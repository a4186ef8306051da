//! Regression calibration and SIMEX.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{point_only, Correction, Estimate, EstimatorRequest, Method, Plan};
use crate::cscore::observation_keys;
use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::rng;

/// Best-linear-predictor imputation of the true exposures from `(A*, L)`
/// using sample moments, with `Σ` removed from the exposure covariance.
///
/// Returns a row-major `n x m` matrix. Exposures declared error-free are
/// copied unchanged, and with `Σ = 0` the result is `A*` itself.
pub fn rc_impute(data: &Dataset, sigma: &MeCovariance) -> Result<Vec<f64>> {
    let (n, p, m) = (data.n(), data.p(), data.m());
    if sigma.dim() != m {
        return Err(Error::Dimension(format!(
            "measurement-error covariance is {0}x{0}, data has {m} exposures",
            sigma.dim()
        )));
    }
    if n <= p + m + 1 {
        return Err(Error::Data(format!(
            "regression calibration needs n > p + m + 1 (n = {n}, p = {p}, m = {m})"
        )));
    }
    let mut out = data.exposures().to_vec();
    if sigma.is_zero() {
        return Ok(out);
    }
    let d = m + p;
    let mut mean = DVector::<f64>::zeros(d);
    let row = |i: usize| -> DVector<f64> {
        DVector::from_iterator(d, data.exposure_row(i).iter().chain(data.covariate_row(i)).copied())
    };
    for i in 0..n {
        mean += row(i);
    }
    mean /= n as f64;
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let c = row(i) - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    // Cov(A*, ·) rows; Cov(A) = Cov(A*) - Σ
    let s = sigma.sigma();
    let mut left = cov.rows(0, m).into_owned();
    for a in 0..m {
        for b in 0..m {
            left[(a, b)] -= s[(a, b)];
        }
    }
    let lu = cov.clone().lu();
    let inv = lu
        .try_inverse()
        .filter(|inv| inv.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Collinearity("joint covariance of (A*, L) is singular".into()))?;
    let gain = &left * inv;
    let noisy: Vec<usize> = (0..m).filter(|&j| !sigma.is_error_free(j)).collect();
    for i in 0..n {
        let c = row(i) - &mean;
        let fitted = &gain * c;
        for &j in &noisy {
            out[i * m + j] = mean[j] + fitted[j];
        }
    }
    Ok(out)
}

/// Least-squares quadratic in `λ` through `(lambdas, values)`, evaluated at
/// `λ = -1`.
pub fn quadratic_extrapolate(lambdas: &[f64], values: &[f64]) -> Result<f64> {
    if lambdas.len() != values.len() {
        return Err(Error::Dimension("lambda and value lengths differ".into()));
    }
    let mut distinct = lambdas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Argument(
            "quadratic extrapolation needs 3 distinct lambdas".into(),
        ));
    }
    let x = DMatrix::from_fn(lambdas.len(), 3, |r, c| lambdas[r].powi(c as i32));
    let y = DVector::from_column_slice(values);
    let coef = (x.transpose() * &x)
        .cholesky()
        .ok_or_else(|| Error::Collinearity("SIMEX extrapolation design is singular".into()))?
        .solve(&(x.transpose() * y));
    Ok(coef[0] - coef[1] + coef[2])
}

/// SIMEX point estimates.
///
/// At each `λ` in the grid, `B` naive refits use `A* + √λ ε_b` with fresh
/// `ε_b ~ N(0, Σ)`; the averaged estimates and the naive fit at `λ = 0` are
/// extrapolated quadratically to `λ = -1`. Regression and propensity
/// parameters are extrapolated; the dose-response values are then
/// re-standardized at the extrapolated coefficients.
pub fn simex_fit(req: &EstimatorRequest, data: &Dataset, sigma: &MeCovariance) -> Result<Estimate> {
    let opts = &req.simex;
    if opts.replicates == 0 || opts.lambdas.is_empty() {
        return Err(Error::Argument("SIMEX needs B >= 1 and a non-empty lambda grid".into()));
    }
    if let Some(l) = opts.lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::Argument(format!("SIMEX lambda {l} must be positive")));
    }
    let naive_req = EstimatorRequest {
        correction: Correction::Naive,
        ..req.clone()
    };
    let base = super::fit_inner(&naive_req, data, sigma)?;
    let mut est = point_only(base.clone(), Correction::Simex);
    if sigma.is_zero() {
        return Ok(est);
    }

    let zero = MeCovariance::zero(data.m());
    // refits only need the regression and propensity rows
    let refit_req = EstimatorRequest {
        grid: Vec::new(),
        contrasts: Vec::new(),
        ..naive_req.clone()
    };
    let refit_plan = Plan::new(&refit_req, data, &zero)?;
    let q = refit_plan.layout().len();
    let start: Vec<f64> = refit_start(&base, &refit_plan, req.method);

    let keys = observation_keys(data);
    let seed = rng::derive_seed(req.seed, &[rng::purpose::SIMEX]);
    let (n, m, r) = (data.n(), data.m(), sigma.rank());
    let jobs: Vec<(usize, usize)> = (0..opts.lambdas.len())
        .flat_map(|k| (0..opts.replicates).map(move |b| (k, b)))
        .collect();
    let fits: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(k, b)| {
            let lambda = opts.lambdas[k];
            let scale = lambda.sqrt();
            let mut a = data.exposures().to_vec();
            let mut u = vec![0.0; r];
            let mut z = vec![0.0; m];
            for (i, &key) in keys.iter().enumerate() {
                let mut g = rng::stream(rng::derive_seed(seed, &[k as u64, b as u64]), key);
                for v in u.iter_mut() {
                    *v = StandardNormal.sample(&mut g);
                }
                sigma.apply_factor(&u, &mut z);
                for j in 0..m {
                    a[i * m + j] += scale * z[j];
                }
            }
            debug_assert_eq!(a.len(), n * m);
            let fail = |source: Error| Error::SimexFailure {
                lambda,
                replicate: b,
                source: Box::new(source),
            };
            let noisy = data.with_exposures(a).map_err(fail)?;
            let plan = Plan::new(&refit_req, &noisy, &zero).map_err(fail)?;
            let root = plan.solve(&refit_req, &noisy, &start).map_err(fail)?;
            if !root.converged {
                return Err(fail(Error::numeric("SIMEX refit did not converge", &root.theta)));
            }
            Ok(root.theta)
        })
        .collect();

    let mut means = vec![vec![0.0; q]; opts.lambdas.len()];
    for (&(k, _), fit) in jobs.iter().zip(fits) {
        let theta = fit?;
        for (acc, v) in means[k].iter_mut().zip(&theta) {
            *acc += v / opts.replicates as f64;
        }
    }
    let mut lambdas = vec![0.0];
    lambdas.extend_from_slice(&opts.lambdas);
    let extrapolated: Vec<f64> = (0..q)
        .map(|c| {
            let mut values = vec![start[c]];
            values.extend(means.iter().map(|mk| mk[c]));
            quadratic_extrapolate(&lambdas, &values)
        })
        .collect::<Result<_>>()?;

    let mut theta = base.theta.values().to_vec();
    splice_refit(&mut theta, &extrapolated, &refit_plan, req.method, base.theta.len());
    if req.method != Method::Ipw {
        restandardize(&mut theta, data, &refit_plan, &req.grid)?;
    }
    est.theta = base.theta.with_values(theta)?;
    est.dose_response = None;
    est.contrasts.clear();
    let full_plan = Plan::new(&naive_req, data, &zero)?;
    full_plan.summarize(req, &mut est)?;
    Ok(point_only(est, Correction::Simex))
}

/// Coefficients followed by propensity parameters, i.e. the full layout with
/// the dose-response block removed.
fn refit_start(base: &Estimate, refit: &Plan, method: Method) -> Vec<f64> {
    let v = base.theta.values();
    let p = refit.model().ncoef();
    let g = if method == Method::Ipw {
        0
    } else {
        base.theta.len() - refit.layout().len()
    };
    v[..p].iter().chain(&v[p + g..]).copied().collect()
}

fn splice_refit(theta: &mut [f64], refit: &[f64], plan: &Plan, method: Method, full_len: usize) {
    let p = plan.model().ncoef();
    let g = if method == Method::Ipw {
        0
    } else {
        full_len - refit.len()
    };
    theta[..p].copy_from_slice(&refit[..p]);
    theta[p + g..].copy_from_slice(&refit[p..]);
}

/// `η(a) = Σ w_i μ(L_i, a; β) / Σ w_i` at the coefficients in `theta`.
fn restandardize(theta: &mut [f64], data: &Dataset, plan: &Plan, grid: &[Vec<f64>]) -> Result<()> {
    let model = plan.model();
    let p = model.ncoef();
    let wsum: f64 = (0..data.n()).map(|i| data.weight(i)).sum();
    for (g, a) in grid.iter().enumerate() {
        let mut s = 0.0;
        for i in 0..data.n() {
            s += data.weight(i) * model.evaluate_mean_real(&theta[..p], data.covariate_row(i), a)?;
        }
        theta[p + g] = s / wsum;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_reproduces_quadratics() {
        let lambdas = [0.0, 0.5, 1.0, 1.5, 2.0];
        let q = |l: f64| 1.5 - 0.7 * l + 0.2 * l * l;
        let values: Vec<f64> = lambdas.iter().map(|&l| q(l)).collect();
        assert!((quadratic_extrapolate(&lambdas, &values).unwrap() - q(-1.0)).abs() < 1e-12);
        let flat = vec![0.3; 5];
        assert!((quadratic_extrapolate(&lambdas, &flat).unwrap() - 0.3).abs() < 1e-13);
        assert!(quadratic_extrapolate(&[0.0, 1.0, 1.0], &[1.0, 2.0, 2.0]).is_err());
    }

    fn univariate(a: Vec<f64>) -> Dataset {
        let n = a.len();
        Dataset::builder()
            .outcome(vec![0.0; n])
            .exposure("a", a)
            .build()
            .unwrap()
    }

    #[test]
    fn rc_without_covariates_is_the_attenuation_blend() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let data = univariate(a.clone());
        let s2 = 0.4;
        let imp = rc_impute(&data, &MeCovariance::diagonal(&[s2]).unwrap()).unwrap();
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var_star = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let var_a = var_star - s2;
        let lambda = var_a / (var_a + s2);
        for (x, v) in a.iter().zip(&imp) {
            assert!((mean + lambda * (x - mean) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rc_with_zero_sigma_is_identity() {
        let data = univariate(vec![0.1, 0.5, -0.3, 2.0, 1.1]);
        let imp = rc_impute(&data, &MeCovariance::zero(1)).unwrap();
        assert_eq!(imp, data.exposures());
        let small = univariate(vec![0.1, 0.5]);
        assert!(rc_impute(&small, &MeCovariance::zero(1)).is_err());
    }
}
