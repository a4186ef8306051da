//! Runs one of the standard simulation studies and prints its metrics table.
//!
//! ```text
//! cargo run --release --example simulation_study -- sim3 400 20 7
//! ```

use std::env;
use std::time::Instant;

use cscausal::simlab::{run_study, Generator, StudyDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = env::args().skip(1).collect();
    let generator: Generator = args.first().map_or("sim2", String::as_str).parse()?;
    let n = args.get(1).map_or(Ok(400), |s| s.parse())?;
    let r = args.get(2).map_or(Ok(20), |s| s.parse())?;
    let seed = args.get(3).map_or(Ok(1), |s| s.parse())?;

    let design = StudyDesign::standard(generator, n, r, seed, false);
    let start = Instant::now();
    let out = run_study(&design)?;
    println!("{generator}: n = {n}, R = {r}, {:.1}s", start.elapsed().as_secs_f64());
    println!(
        "{:<16} {:<12} {:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>5}",
        "cell", "method", "parameter", "bias", "ese", "ase_uc", "cov_uc", "ase_bc", "cov_bc", "fail"
    );
    for row in &out.table.rows {
        println!(
            "{:<16} {:<12} {:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.1} {:>7.2} {:>7.1} {:>5}",
            row.cell,
            row.method,
            row.parameter,
            row.bias,
            row.ese,
            row.ase_uc,
            row.cov_uc,
            row.ase_bc,
            row.cov_bc,
            row.failures
        );
    }
    if out.table.warning {
        println!("warning: more than 5% of replicates failed in some rows");
    }
    Ok(())
}
