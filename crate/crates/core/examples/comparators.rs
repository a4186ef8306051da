//! Compares the corrected score with regression calibration and SIMEX on a
//! cubic dose-response curve.
//!
//! ```text
//! cargo run --release --example comparators
//! ```

use cscausal::estimators::{self, rc_impute, Correction, EstimatorRequest};
use cscausal::models::{Factor, Link, ModelSpec};
use cscausal::simlab::{generate, Generator, Setting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = generate(Generator::Sim1, Setting::Additive(0.25), 3000, 13, 0)?;
    let imputed = rc_impute(&sim.observed, &sim.sigma)?;
    println!("first imputed exposures: {:.3?}", &imputed[..4]);

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
    let grid: Vec<Vec<f64>> = [-0.5, 0.5, 1.5].iter().map(|&v| vec![v]).collect();
    let req = EstimatorRequest::gformula(outcome, grid.clone()).with_seed(6);
    let truth = |a: f64| 0.25 * a + 0.5 * a * a - 0.5 * a.powi(3) + 0.5;

    print!("{:<14}", "a");
    for p in &grid {
        print!("{:>10}", p[0]);
    }
    print!("\n{:<14}", "truth");
    for p in &grid {
        print!("{:>10.3}", truth(p[0]));
    }
    println!();
    for correction in [Correction::Naive, Correction::Rc, Correction::Simex, Correction::Cs] {
        let est = estimators::fit(&req.clone().with_correction(correction), &sim.observed, &sim.sigma)?;
        print!("{:<14}", est.name());
        for v in &est.dose_response.as_ref().expect("grid was given").estimate {
            print!("{v:>10.3}");
        }
        println!();
    }
    Ok(())
}
