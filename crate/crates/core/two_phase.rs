//! Case-cohort design: all cases plus a random sub-cohort of non-cases have
//! their exposure measured; inverse selection weights restore the cohort.
//!
//! ```text
//! cargo run --release --example two_phase
//! ```

use cscausal::estimators::{self, two_phase_weights, Correction, EstimatorRequest, Propensity};
use cscausal::models::{Factor, Link, ModelSpec, PropensitySpec};
use cscausal::simlab::{generate, Generator, Setting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let l = |name: &str| Factor::covariate(name);
    let a = || Factor::exposure("a");
    let outcome = ModelSpec::new(
        Link::Identity,
        vec![
            vec![a()],
            vec![l("l1")],
            vec![l("l2")],
            vec![a(), l("l1")],
            vec![a(), l("l2")],
        ],
    );
    let ps = Propensity::Estimated(vec![PropensitySpec::new("a", vec![vec![l("l1")], vec![l("l2")]])]);
    let req = EstimatorRequest::dr(outcome, ps, vec![vec![0.0], vec![1.0]])
        .with_contrasts(vec![(1, 0)])
        .with_seed(4);

    for fraction in [1.0, 0.25, 0.10] {
        let sim = generate(Generator::TwoPhase, Setting::Subcohort(fraction), 2000, 21, 0)?;
        let weights = two_phase_weights(&sim.observed)?;
        let distinct: std::collections::BTreeSet<u64> = weights.iter().map(|w| w.to_bits()).collect();
        println!(
            "sub-cohort {:>3.0}%: {} of 2000 subjects measured, {} distinct weights",
            fraction * 100.0,
            sim.observed.n(),
            distinct.len()
        );
        for correction in [Correction::Naive, Correction::Cs] {
            let est = estimators::fit(&req.clone().with_correction(correction), &sim.observed, &sim.sigma)?;
            let c = &est.contrasts[0];
            println!(
                "    {:<8} effect {:.4}  se {:.4}  (truth 0.175)",
                est.name(),
                c.estimate,
                c.se_uc
            );
        }
    }
    Ok(())
}
