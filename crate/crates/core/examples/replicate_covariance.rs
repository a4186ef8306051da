//! Estimates the measurement-error covariance from repeated exposure
//! measurements and uses it in a corrected fit.
//!
//! ```text
//! cargo run --release --example replicate_covariance
//! ```

use cscausal::estimators::{self, estimate_me_covariance, Correction, EstimatorRequest, Propensity};
use cscausal::models::{Factor, Link, ModelSpec, PropensitySpec};
use cscausal::simlab::{generate, pilot_study, Generator, Setting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let true_variance = 0.2;
    for (pilot_n, k) in [(50, 2), (100, 5), (1000, 5)] {
        let pilot = pilot_study(pilot_n, k, true_variance, 11, 0)?;
        let sigma = estimate_me_covariance(&pilot, false)?;
        println!("pilot n = {pilot_n:>4}, k = {k}: {:.4?}", sigma.to_rows());
    }

    let sim = generate(Generator::Sim2, Setting::Additive(true_variance), 2000, 5, 0)?;
    let pilot = pilot_study(200, 3, true_variance, 5, 0)?;
    let sigma = estimate_me_covariance(&pilot, true)?;
    let msm = ModelSpec::new(
        Link::Identity,
        vec![vec![Factor::exposure("a1")], vec![Factor::exposure("a2")]],
    );
    let l2 = || vec![vec![Factor::covariate("l").pow(2)]];
    let ps = Propensity::Estimated(vec![PropensitySpec::new("a1", l2()), PropensitySpec::new("a2", l2())]);
    for correction in [Correction::Naive, Correction::Cs] {
        let req = EstimatorRequest::ipw(msm.clone(), ps.clone())
            .with_correction(correction)
            .with_seed(2);
        let est = estimators::fit(&req, &sim.observed, &sigma)?;
        let msm_values = est.theta.block_values("gamma").unwrap_or_default();
        println!(
            "{:<10} MSM coefficients {:.3?}  (truth [0, 1, 1])",
            est.name(),
            msm_values
        );
    }
    Ok(())
}
