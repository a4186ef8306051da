//! Fits the g-formula, IPW and doubly robust estimators to one simulated
//! dataset with a mismeasured exposure, with and without the corrected score.
//!
//! ```text
//! cargo run --release --example dose_response
//! ```

use cscausal::estimators::{self, Correction, EstimatorRequest, Propensity};
use cscausal::models::{Factor, Link, ModelSpec, PropensitySpec};
use cscausal::simlab::{generate, Generator, Setting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = generate(Generator::Sim1, Setting::Additive(0.09), 8000, 3, 0)?;
    let a = || Factor::exposure("a");
    let outcome = ModelSpec::new(
        Link::Identity,
        vec![
            vec![a()],
            vec![a().pow(2)],
            vec![a().pow(3)],
            vec![Factor::covariate("l")],
        ],
    );
    let msm = ModelSpec::new(Link::Identity, vec![vec![a()], vec![a().pow(2)], vec![a().pow(3)]]);
    let ps = Propensity::Estimated(vec![PropensitySpec::new("a", vec![vec![Factor::covariate("l")]])]);
    let grid: Vec<Vec<f64>> = [-1.0, 0.0, 1.0, 2.0].iter().map(|&v| vec![v]).collect();

    let requests = [
        EstimatorRequest::gformula(outcome.clone(), grid.clone()),
        EstimatorRequest::ipw(msm, ps.clone()).with_grid(grid.clone()),
        EstimatorRequest::dr(outcome, ps, grid.clone()),
    ];
    let truth = |a: f64| 0.25 * a + 0.5 * a * a - 0.5 * a.powi(3) + 0.5;
    print!("{:<16}", "a");
    for p in &grid {
        print!("{:>16}", p[0]);
    }
    println!();
    print!("{:<16}", "truth");
    for p in &grid {
        print!("{:>16.3}", truth(p[0]));
    }
    println!();
    for req in requests {
        for correction in [Correction::Oracle, Correction::Naive, Correction::Cs] {
            let req = req.clone().with_correction(correction).with_seed(17);
            let data = if correction == Correction::Oracle {
                &sim.truth
            } else {
                &sim.observed
            };
            let est = estimators::fit(&req, data, &sim.sigma)?;
            let curve = est.dose_response.as_ref().expect("grid was given");
            print!("{:<16}", est.name());
            for (e, se) in curve.estimate.iter().zip(&curve.se_uc) {
                print!("{:>9.3} ({:.3})", e, se);
            }
            println!();
        }
    }
    Ok(())
}
