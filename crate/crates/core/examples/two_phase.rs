//! Case-cohort design: all cases plus a random sub-cohort of non-cases have
//! their exposure measured; inverse selection weights restore the cohort.
//!
//! ```text
//! cargo run --release --example two_phase
//! ```

use std::collections::BTreeSet;

use cscausal::estimators::{self, Correction, EstimatorRequest, Propensity};
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
        let sim = generate(Generator::TwoPhase, Setting::Subcohort(fraction), 4000, 21, 0)?;
        let weights = sim.observed.sample_weight().unwrap_or(&[]);
        let distinct: BTreeSet<u64> = weights.iter().map(|w| w.to_bits()).collect();
        let total: f64 = weights.iter().sum();
        println!(
            "sub-cohort {:>3.0}%: {} of 4000 subjects measured, {} distinct weights summing to {:.0}",
            fraction * 100.0,
            sim.observed.n(),
            distinct.len(),
            total
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
