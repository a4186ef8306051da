use super::*;
use crate::models::Factor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn synthetic(n: usize, seed: u64, s2: f64) -> Dataset {
    let mut g = rng::stream(seed, 0);
    let noise = Normal::new(0.0, s2.sqrt().max(1e-300)).unwrap();
    let (mut y, mut l, mut a) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let li: f64 = g.random();
        let ai = li + 0.5 * g.sample::<f64, _>(rand_distr::StandardNormal);
        let yi = 0.2 + 0.5 * ai - 0.3 * ai * ai + li + 0.3 * g.sample::<f64, _>(rand_distr::StandardNormal);
        let star = if s2 > 0.0 { ai + noise.sample(&mut g) } else { ai };
        y.push(yi);
        l.push(li);
        a.push(star);
    }
    Dataset::builder()
        .outcome(y)
        .covariate("l", l)
        .exposure("a", a)
        .build()
        .unwrap()
}

fn outcome() -> ModelSpec {
    ModelSpec::new(
        Link::Identity,
        vec![
            vec![Factor::exposure("a")],
            vec![Factor::exposure("a").pow(2)],
            vec![Factor::covariate("l")],
        ],
    )
}

fn linear_outcome() -> ModelSpec {
    ModelSpec::new(
        Link::Identity,
        vec![vec![Factor::exposure("a")], vec![Factor::covariate("l")]],
    )
}

fn msm() -> ModelSpec {
    ModelSpec::new(Link::Identity, vec![vec![Factor::exposure("a")]])
}

fn ps() -> Propensity {
    Propensity::Estimated(vec![PropensitySpec::new("a", vec![vec![Factor::covariate("l")]])])
}

fn grid() -> Vec<Vec<f64>> {
    vec![vec![0.0], vec![0.5], vec![1.0]]
}

fn requests() -> Vec<EstimatorRequest> {
    vec![
        EstimatorRequest::gformula(outcome(), grid()).with_contrasts(vec![(2, 0)]),
        EstimatorRequest::ipw(msm(), ps()).with_grid(grid()),
        EstimatorRequest::dr(linear_outcome(), ps(), grid()).with_contrasts(vec![(2, 0)]),
    ]
}

#[test]
fn zero_sigma_corrected_score_is_naive() {
    let data = synthetic(300, 11, 0.0);
    let zero = MeCovariance::zero(1);
    for req in requests() {
        let naive = fit(&req.clone().with_correction(Correction::Naive), &data, &zero).unwrap();
        let cs = fit(&req.clone().with_correction(Correction::Cs).with_seed(5), &data, &zero).unwrap();
        assert!(naive.converged && cs.converged, "{}", req.name());
        assert_eq!(naive.theta.values(), cs.theta.values(), "{}", req.name());
        assert_eq!(naive.vcov_uc, cs.vcov_uc);
    }
}

#[test]
fn known_unit_weights_reduce_ipw_to_ols() {
    let data = synthetic(200, 3, 0.2);
    let req = EstimatorRequest::ipw(msm(), Propensity::Known(PropensityModel::unit(&data)));
    let est = fit(&req, &data, &MeCovariance::zero(1)).unwrap();
    let a = data.exposure_column(0);
    let y = data.y();
    let n = a.len() as f64;
    let (ma, my) = (a.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = a.iter().zip(y).map(|(a, y)| (a - ma) * (y - my)).sum();
    let sxx: f64 = a.iter().map(|a| (a - ma).powi(2)).sum();
    let slope = sxy / sxx;
    let g = est.theta.block_values("gamma").unwrap();
    assert!((g[1] - slope).abs() < 1e-9);
    assert!((g[0] - (my - slope * ma)).abs() < 1e-9);
    assert_eq!(est.theta.len(), 2);
}

#[test]
fn corrected_score_removes_attenuation() {
    let data = synthetic(4000, 21, 0.1);
    let sigma = MeCovariance::diagonal(&[0.1]).unwrap();
    let req = EstimatorRequest::gformula(linear_outcome(), grid()).with_contrasts(vec![(2, 0)]);
    let naive = fit(&req.clone(), &data, &sigma).unwrap();
    let cs = fit(&req.with_correction(Correction::Cs).with_seed(9), &data, &sigma).unwrap();
    assert!(cs.converged);
    // naive slope is attenuated toward zero relative to the corrected one
    let (bn, bc) = (naive.value("beta", 1).unwrap(), cs.value("beta", 1).unwrap());
    assert!(bc.abs() > bn.abs(), "naive {bn}, cs {bc}");
    let c = &cs.contrasts[0];
    assert!(c.se_uc > 0.0 && c.se_bc >= c.se_uc * 0.999);
    let dr = cs.dose_response.as_ref().unwrap();
    assert_eq!(dr.estimate.len(), 3);
    assert!((dr.estimate[2] - dr.estimate[0] - c.estimate).abs() < 1e-12);
}

#[test]
fn rc_and_simex_return_point_estimates() {
    let data = synthetic(400, 8, 0.1);
    let sigma = MeCovariance::diagonal(&[0.1]).unwrap();
    let mut req = EstimatorRequest::gformula(linear_outcome(), grid());
    req.simex.replicates = 5;
    for c in [Correction::Rc, Correction::Simex] {
        let est = fit(&req.clone().with_correction(c), &data, &sigma).unwrap();
        assert!(est.vcov_uc.is_none());
        assert!(est.theta.values().iter().all(|v| v.is_finite()));
        let dr = est.dose_response.unwrap();
        assert!(dr.se_uc.iter().all(|v| v.is_nan()));
    }
    let zero = MeCovariance::zero(1);
    let naive = fit(&req, &data, &zero).unwrap();
    for c in [Correction::Rc, Correction::Simex] {
        let est = fit(&req.clone().with_correction(c), &data, &zero).unwrap();
        assert_eq!(est.theta.values(), naive.theta.values());
    }
}

#[test]
fn incompatible_specs_are_rejected() {
    let data = synthetic(50, 1, 0.0);
    let zero = MeCovariance::zero(1);
    let mut dr = EstimatorRequest::dr(linear_outcome(), ps(), grid());
    dr.outcome.as_mut().unwrap().link = Link::Logit;
    assert!(matches!(fit(&dr, &data, &zero), Err(Error::Estimator { .. })));
    let mut cap = EstimatorRequest::ipw(msm(), ps()).with_correction(Correction::Cs);
    cap.truncation = Some(0.99);
    assert!(fit(&cap, &data, &zero).is_err());
    let empty = EstimatorRequest::ipw(msm(), Propensity::Estimated(vec![]));
    assert!(fit(&empty, &data, &zero).is_err());
    assert!(fit_ipw(&requests()[0], &data, &zero).is_err());
}

#[test]
fn sensitivity_grid_with_zero_is_naive() {
    let data = synthetic(200, 4, 0.05);
    let req = EstimatorRequest::gformula(linear_outcome(), grid()).with_correction(Correction::Cs);
    let cells = sensitivity_grid(
        &req,
        &data,
        &[MeCovariance::zero(1), MeCovariance::diagonal(&[0.05]).unwrap()],
    );
    let naive = fit(
        &req.clone().with_correction(Correction::Naive),
        &data,
        &MeCovariance::zero(1),
    )
    .unwrap();
    assert_eq!(cells[0].as_ref().unwrap().theta.values(), naive.theta.values());
    assert!(cells[1].is_ok());
}
