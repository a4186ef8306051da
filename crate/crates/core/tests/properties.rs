use cscausal::data::MeCovariance;
use cscausal::estimators::{self, quadratic_extrapolate, two_phase_weights, Correction, EstimatorRequest, Propensity};
use cscausal::models::{Factor, Link, ModelSpec, PropensitySpec};
use cscausal::Dataset;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn dataset(n: usize, seed: u64, s2: f64) -> Dataset {
    let mut g = cscausal::rng::stream(seed, 3);
    let (mut y, mut l, mut a) = (vec![], vec![], vec![]);
    for _ in 0..n {
        let li: f64 = g.random();
        let ai = li + 0.5 * g.sample::<f64, _>(StandardNormal);
        y.push(0.5 + 0.3 * ai - 0.2 * ai * ai + li + 0.3 * g.sample::<f64, _>(StandardNormal));
        l.push(li);
        a.push(ai + s2.sqrt() * g.sample::<f64, _>(StandardNormal));
    }
    Dataset::builder()
        .outcome(y)
        .covariate("l", l)
        .exposure("a", a)
        .build()
        .unwrap()
}

fn requests() -> Vec<EstimatorRequest> {
    let outcome = ModelSpec::new(
        Link::Identity,
        vec![
            vec![Factor::exposure("a")],
            vec![Factor::exposure("a").pow(2)],
            vec![Factor::covariate("l")],
        ],
    );
    let msm = ModelSpec::new(Link::Identity, vec![vec![Factor::exposure("a")]]);
    let ps = Propensity::Estimated(vec![PropensitySpec::new("a", vec![vec![Factor::covariate("l")]])]);
    let grid = vec![vec![0.0], vec![1.0]];
    vec![
        EstimatorRequest::gformula(outcome.clone(), grid.clone()),
        EstimatorRequest::ipw(msm, ps.clone()),
        EstimatorRequest::dr(outcome, ps, grid),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn zero_covariance_reduces_every_estimator_to_naive(seed in any::<u64>(), n in 40usize..120) {
        let data = dataset(n, seed, 0.1);
        let zero = MeCovariance::zero(1);
        for req in requests() {
            let naive = estimators::fit(&req, &data, &zero).unwrap();
            let cs = estimators::fit(&req.clone().with_correction(Correction::Cs).with_seed(seed), &data, &zero).unwrap();
            prop_assert_eq!(naive.theta.values(), cs.theta.values());
        }
    }

    #[test]
    fn estimates_do_not_depend_on_row_order(seed in any::<u64>(), n in 60usize..120) {
        let data = dataset(n, seed, 0.05);
        let sigma = MeCovariance::diagonal(&[0.05]).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        let mut g = cscausal::rng::stream(seed, 9);
        for i in (1..n).rev() {
            order.swap(i, g.random_range(0..=i));
        }
        let shuffled = data.select_rows(&order).unwrap();
        for req in requests() {
            let req = req.with_correction(Correction::Cs).with_seed(4);
            let a = estimators::fit(&req, &data, &sigma).unwrap();
            let b = estimators::fit(&req, &shuffled, &sigma).unwrap();
            for (x, y) in a.theta.values().iter().zip(b.theta.values()) {
                prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn sandwich_is_symmetric_and_psd(seed in any::<u64>()) {
        let data = dataset(150, seed, 0.05);
        let sigma = MeCovariance::diagonal(&[0.05]).unwrap();
        let req = requests()[2].clone().with_correction(Correction::Cs);
        let est = estimators::fit(&req, &data, &sigma).unwrap();
        let v = est.vcov_uc.unwrap();
        prop_assert!((&v - v.transpose()).amax() <= 1e-12 * v.amax());
        let eig = v.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-10 * eig.max());
    }

    #[test]
    fn quadratics_are_reproduced(c in -5.0f64..5.0, b in -5.0f64..5.0, a in -5.0f64..5.0) {
        let lambdas = [0.0, 0.5, 1.0, 1.5, 2.0];
        let q = |x: f64| c + b * x + a * x * x;
        let values: Vec<f64> = lambdas.iter().map(|&x| q(x)).collect();
        let got = quadratic_extrapolate(&lambdas, &values).unwrap();
        prop_assert!((got - q(-1.0)).abs() < 1e-9 * (1.0 + q(-1.0).abs()));
    }

    #[test]
    fn two_phase_weights_restore_stratum_sizes(flags in prop::collection::vec((any::<bool>(), any::<bool>()), 4..60)) {
        let case: Vec<bool> = flags.iter().map(|f| f.0).collect();
        let mut selected: Vec<bool> = flags.iter().map(|f| f.1).collect();
        // one selected member per non-empty stratum
        for stratum in [true, false] {
            if let Some(i) = case.iter().position(|&c| c == stratum) {
                selected[i] = true;
            }
        }
        let n = case.len();
        let data = Dataset::builder()
            .outcome(vec![0.0; n])
            .exposure("a", vec![0.0; n])
            .case_indicator(case.clone())
            .selected(selected)
            .build()
            .unwrap();
        let w = two_phase_weights(&data).unwrap();
        for stratum in [true, false] {
            let size = case.iter().filter(|&&c| c == stratum).count() as f64;
            let total: f64 = w.iter().zip(&case).filter(|(_, &c)| c == stratum).map(|(w, _)| w).sum();
            prop_assert!((total - size).abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_covariance_scales_entries(v in 0.0f64..2.0, s in 0.0f64..4.0) {
        let base = MeCovariance::from_rows(&[vec![v, 0.3 * v], vec![0.3 * v, v]]).unwrap();
        let scaled = base.scaled(s).unwrap();
        prop_assert!((scaled.sigma() - base.sigma() * s).amax() <= 1e-12 * (1.0 + v * s));
    }
}
