//! The idea behind the corrected score: for a measured `A* = A + U` with
//! `U ~ N(0, σ²)`, the real part of `f(A* + iσZ)` averaged over standard
//! normal `Z` is an unbiased estimate of `f(A)` for entire `f`.
//!
//! ```text
//! cargo run --release --example corrected_score
//! ```

use cscausal::cscore::PerturbationBank;
use cscausal::{rng, Complex, MeCovariance};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = 0.8;
    let sigma2 = 0.3;
    let n = 20_000;
    let sigma = MeCovariance::diagonal(&[sigma2])?;
    let mut g = rng::stream(1, 0);
    let measured: Vec<f64> = (0..n)
        .map(|_| a + sigma2.sqrt() * g.sample::<f64, _>(StandardNormal))
        .collect();
    let keys: Vec<u64> = (0..n as u64).collect();
    let bank = PerturbationBank::draw(&keys, 16, &sigma, 9, true)?;

    let f: [(&str, fn(Complex) -> Complex, fn(f64) -> f64); 3] = [
        ("a^2", |z| z.powi(2), |x| x * x),
        ("a^3", |z| z.powi(3), |x| x.powi(3)),
        ("exp(a)", |z| z.exp(), f64::exp),
    ];
    println!("{:<8} {:>10} {:>10} {:>10}", "f", "f(a)", "naive", "corrected");
    for (name, complex, real) in f {
        let naive = measured.iter().map(|&x| real(x)).sum::<f64>() / n as f64;
        let mut corrected = 0.0;
        for (i, &x) in measured.iter().enumerate() {
            let mut s = 0.0;
            for b in 0..bank.replicates() {
                s += complex(Complex::new(x, bank.draw_at(i, b)[0])).re;
            }
            corrected += s / bank.replicates() as f64;
        }
        corrected /= n as f64;
        println!("{:<8} {:>10.4} {:>10.4} {:>10.4}", name, real(a), naive, corrected);
    }
    Ok(())
}
