//! Monte-Carlo corrected scores.
//!
//! A score written for the true exposure `A` is evaluated at the complex
//! exposure `A* + iε̃` with `ε̃ ~ N(0, Σ)`; averaging the real part over a
//! frozen bank of draws gives an estimating function of the observed data
//! whose conditional mean equals the original score.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::complex::Complex;
use crate::data::{Dataset, MeCovariance};
use crate::error::{Error, Result};
use crate::mestim::{EquationBlock, EstimatingFunction};
use crate::models::Link;
use crate::rng;

/// Inverse link `g⁻¹(z)` at a complex argument.
pub fn complex_link(z: Complex, link: Link) -> Result<Complex> {
    match link {
        Link::Identity => Ok(z),
        Link::Log => guarded_exp(z),
        Link::Logit => Ok((Complex::ONE + guarded_exp(-z)?).recip()),
    }
}

/// `g⁻¹(z)` and its derivative `(g⁻¹)'(z)`.
pub fn complex_link_with_derivative(z: Complex, link: Link) -> Result<(Complex, Complex)> {
    match link {
        Link::Identity => Ok((z, Complex::ONE)),
        Link::Log => {
            let e = guarded_exp(z)?;
            Ok((e, e))
        }
        Link::Logit => {
            let p = (Complex::ONE + guarded_exp(-z)?).recip();
            Ok((p, p * (Complex::ONE - p)))
        }
    }
}

/// `exp(z)` with the `|Re z| > 700` overflow guard. The observation index is
/// filled in by the caller that knows it.
pub fn guarded_exp(z: Complex) -> Result<Complex> {
    z.checked_exp().map_err(|real_part| Error::Overflow {
        observation: 0,
        real_part,
    })
}

/// Frozen perturbations `ε̃_ib = F u_ib`, stored as `n x B x m`.
#[derive(Clone, Debug)]
pub struct PerturbationBank {
    n: usize,
    replicates: usize,
    m: usize,
    rank: usize,
    antithetic: bool,
    seed: u64,
    eps: Vec<f64>,
}

/// `n x B` i.i.d. draws keyed by observation index.
pub fn draw_perturbations(n: usize, replicates: usize, sigma: &MeCovariance, seed: u64) -> Result<PerturbationBank> {
    let keys: Vec<u64> = (0..n as u64).collect();
    PerturbationBank::draw(&keys, replicates, sigma, seed, false)
}

impl PerturbationBank {
    /// Draws `replicates` perturbations per observation. Observation `i`
    /// reads its own stream keyed by `(seed, keys[i])`, so the bank does not
    /// depend on row order when the keys are content-derived.
    ///
    /// With `antithetic`, draws come in pairs `(ε̃, -ε̃)`.
    pub fn draw(keys: &[u64], replicates: usize, sigma: &MeCovariance, seed: u64, antithetic: bool) -> Result<Self> {
        let n = keys.len();
        if n == 0 || replicates == 0 {
            return Err(Error::Argument("perturbation bank needs n >= 1 and B >= 1".into()));
        }
        let m = sigma.dim();
        let rank = sigma.rank();
        let mut eps = vec![0.0; n * replicates * m];
        if rank > 0 {
            let mut u = vec![0.0; rank];
            let mut z = vec![0.0; m];
            for (i, &key) in keys.iter().enumerate() {
                let mut rng = rng::stream(seed, key);
                let mut b = 0;
                while b < replicates {
                    for v in u.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    sigma.apply_factor(&u, &mut z);
                    let base = (i * replicates + b) * m;
                    eps[base..base + m].copy_from_slice(&z);
                    b += 1;
                    if antithetic && b < replicates {
                        let base = (i * replicates + b) * m;
                        for (e, v) in eps[base..base + m].iter_mut().zip(&z) {
                            *e = -v;
                        }
                        b += 1;
                    }
                }
            }
            // error-free exposures carry exact (positive) zeros
            for j in (0..m).filter(|&j| sigma.is_error_free(j)) {
                for cell in eps.iter_mut().skip(j).step_by(m) {
                    *cell = 0.0;
                }
            }
        }
        Ok(PerturbationBank {
            n,
            replicates,
            m,
            rank,
            antithetic,
            seed,
            eps,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_antithetic(&self) -> bool {
        self.antithetic
    }

    /// True when `Σ = 0`: every perturbation is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.rank == 0
    }

    /// `ε̃_ib` as a length-`m` slice.
    #[inline]
    pub fn draw_at(&self, i: usize, b: usize) -> &[f64] {
        let base = (i * self.replicates + b) * self.m;
        &self.eps[base..base + self.m]
    }

    /// Draws that need evaluating and their multiplicities. For scores with
    /// real coefficients `Re ψ(A* - iε̃) = Re ψ(A* + iε̃)`, so the second
    /// member of each antithetic pair repeats the first.
    fn distinct(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let step = if self.antithetic { 2 } else { 1 };
        (0..self.replicates).step_by(step).map(move |b| {
            let mult = if self.antithetic && b + 1 < self.replicates {
                2.0
            } else {
                1.0
            };
            (b, mult)
        })
    }
}

/// Content hash of each row (outcome, covariates, exposures), with a running
/// count to separate exact duplicates. Used to key perturbation streams so
/// that permuting the rows permutes the draws with them.
pub fn observation_keys(data: &Dataset) -> Vec<u64> {
    let mut seen = std::collections::HashMap::new();
    (0..data.n())
        .map(|i| {
            let mut tags: Vec<u64> = Vec::with_capacity(1 + data.p() + data.m());
            tags.push(data.y()[i].to_bits());
            tags.extend(data.covariate_row(i).iter().map(|v| v.to_bits()));
            tags.extend(data.exposure_row(i).iter().map(|v| v.to_bits()));
            let h = rng::derive_seed(0, &tags);
            let count = seen.entry(h).or_insert(0u64);
            let key = rng::derive_seed(h, &[*count]);
            *count += 1;
            key
        })
        .collect()
}

/// A score that accepts complex exposures. Implementations must have real
/// coefficients, i.e. `ψ(conj(a)) = conj(ψ(a))`, which holds for every
/// polynomial, exponential and rational expression in `a` with real
/// constants.
pub trait ComplexScore: Sync {
    fn label(&self) -> &str;
    fn rows(&self) -> usize;
    fn n_obs(&self) -> usize;
    /// Indices into θ that the score reads.
    fn params(&self) -> &[usize];
    /// Measured exposure row of observation `i`.
    fn exposure(&self, i: usize) -> &[f64];
    fn eval(&self, i: usize, a: &[Complex], theta: &[f64], out: &mut [Complex]) -> Result<()>;
}

/// `ψ_MCCS(i, θ) = B⁻¹ Σ_b Re ψ0(A*_i + iε̃_ib; θ)`.
///
/// With a zero bank the score is evaluated once at `A* + 0i`, which is
/// exactly the naive score.
pub struct Mccs<S> {
    score: S,
    bank: Arc<PerturbationBank>,
}

/// Wraps `score` with the bank. The bank must match the score's `n` and
/// exposure dimension.
pub fn mccs_transform<S: ComplexScore>(score: S, bank: Arc<PerturbationBank>) -> Result<Mccs<S>> {
    if bank.n() != score.n_obs() {
        return Err(Error::Dimension(format!(
            "perturbation bank has {} observations, score has {}",
            bank.n(),
            score.n_obs()
        )));
    }
    if score.n_obs() > 0 && bank.dim() != score.exposure(0).len() {
        return Err(Error::Dimension(format!(
            "perturbation bank has {} exposures, score has {}",
            bank.dim(),
            score.exposure(0).len()
        )));
    }
    Ok(Mccs { score, bank })
}

/// Evaluates `score` at the real exposure `A*` (oracle and naive fits).
pub fn real_score<S: ComplexScore>(score: S) -> Mccs<S> {
    let m = if score.n_obs() > 0 { score.exposure(0).len() } else { 0 };
    let n = score.n_obs();
    let bank = PerturbationBank {
        n,
        replicates: 1,
        m,
        rank: 0,
        antithetic: false,
        seed: 0,
        eps: vec![0.0; n * m],
    };
    Mccs {
        score,
        bank: Arc::new(bank),
    }
}

impl<S: ComplexScore> Mccs<S> {
    pub fn score(&self) -> &S {
        &self.score
    }

    pub fn bank(&self) -> &PerturbationBank {
        &self.bank
    }

    fn eval_real(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        let rows = self.score.rows();
        let astar = self.score.exposure(i);
        let mut a: Vec<Complex> = astar.iter().map(|&v| Complex::real(v)).collect();
        let mut val = vec![Complex::ZERO; rows];
        let at = |e: Error| match e {
            Error::Overflow { real_part, .. } => Error::Overflow {
                observation: i,
                real_part,
            },
            other => other,
        };
        if self.bank.is_zero() {
            self.score.eval(i, &a, theta, &mut val).map_err(at)?;
            for (o, v) in out.iter_mut().zip(&val) {
                *o = v.re;
            }
            return Ok(());
        }
        out[..rows].fill(0.0);
        for (b, mult) in self.bank.distinct() {
            for (aj, e) in a.iter_mut().zip(self.bank.draw_at(i, b)) {
                aj.im = *e;
            }
            self.score.eval(i, &a, theta, &mut val).map_err(at)?;
            for (o, v) in out.iter_mut().zip(&val) {
                *o += mult * v.re;
            }
        }
        let scale = 1.0 / self.bank.replicates() as f64;
        for o in out[..rows].iter_mut() {
            *o *= scale;
        }
        Ok(())
    }
}

impl<S: ComplexScore> EquationBlock for Mccs<S> {
    fn label(&self) -> &str {
        self.score.label()
    }
    fn rows(&self) -> usize {
        self.score.rows()
    }
    fn params(&self) -> &[usize] {
        self.score.params()
    }
    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_real(i, theta, out)
    }
}

impl<S: ComplexScore> EstimatingFunction for Mccs<S> {
    fn dim(&self) -> usize {
        self.score.rows()
    }
    fn n_obs(&self) -> usize {
        self.score.n_obs()
    }
    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_real(i, theta, out)
    }
}

/// Normal propensity quantities for a single exposure at one covariate row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalPs {
    /// Conditional mean `E(A | L = l)`.
    pub cond_mean: f64,
    /// Conditional variance `δ²`.
    pub delta2: f64,
    /// Marginal mean `μ`.
    pub mu: f64,
    /// Marginal variance `τ²`.
    pub tau2: f64,
}

/// Closed-form `E_ε̃ Re[SW(Ã)(Y - γ0 - γ1 Ã)(1, Ã)]` for a univariate normal
/// propensity and a linear MSM, with `Ã = A* + iε̃`, `ε̃ ~ N(0, σ²)`.
///
/// Writing `SW(A) = (δ/τ) exp(b1 A² + b2 A + b3)`, the ε̃-integral is Gaussian
/// with variance `v = σ² / (1 + 2σ² b1)` and exists only when
/// `1 + 2σ² b1 > 0`.
pub fn closed_form_cs_ipw(y: f64, a_star: f64, sigma2: f64, ps: NormalPs, gamma: [f64; 2]) -> Result<[f64; 2]> {
    if !(ps.delta2 > 0.0 && ps.tau2 > 0.0) {
        return Err(Error::Argument("propensity variances must be positive".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::Argument(format!("error variance {sigma2} must be >= 0")));
    }
    let NormalPs {
        cond_mean: ml,
        delta2,
        mu,
        tau2,
    } = ps;
    let b1 = 0.5 * (1.0 / delta2 - 1.0 / tau2);
    let b2 = mu / tau2 - ml / delta2;
    let b3 = 0.5 * (ml * ml / delta2 - mu * mu / tau2);
    let denom = 1.0 + 2.0 * sigma2 * b1;
    if !(denom > 0.0) {
        return Err(Error::DivergentCorrection { value: denom });
    }
    let a = a_star;
    let [g0, g1] = gamma;
    let c1 = b1 * a * a + b2 * a + b3;
    let c3 = 2.0 * b1 * a + b2;
    let v = sigma2 / denom;
    let g = (delta2 / tau2).sqrt() * (c1 - 0.5 * c3 * c3 * v).exp() / denom.sqrt();
    let d1 = y - g0 - g1 * a;
    let d5 = y - g0 - 2.0 * g1 * a;
    let first = g * (d1 + g1 * c3 * v);
    let second = g * (a * d1 + g1 * v * (1.0 - c3 * c3 * v) - d5 * c3 * v);
    if !(first.is_finite() && second.is_finite()) {
        return Err(Error::numeric("closed-form corrected IPW score", &[g0, g1]));
    }
    Ok([first, second])
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ols {
        y: Vec<f64>,
        a: Vec<f64>,
        params: Vec<usize>,
    }

    impl ComplexScore for Ols {
        fn label(&self) -> &str {
            "ols"
        }
        fn rows(&self) -> usize {
            2
        }
        fn n_obs(&self) -> usize {
            self.y.len()
        }
        fn params(&self) -> &[usize] {
            &self.params
        }
        fn exposure(&self, i: usize) -> &[f64] {
            std::slice::from_ref(&self.a[i])
        }
        fn eval(&self, i: usize, a: &[Complex], th: &[f64], out: &mut [Complex]) -> Result<()> {
            let r = (a[0] * -th[1]) + (self.y[i] - th[0]);
            out[0] = r;
            out[1] = r * a[0];
            Ok(())
        }
    }

    #[test]
    fn inverse_links() {
        assert_eq!(complex_link(Complex::ZERO, Link::Logit).unwrap(), Complex::real(0.5));
        let e = complex_link(Complex::new(0.0, std::f64::consts::PI), Link::Log).unwrap();
        assert!((e.re + 1.0).abs() < 1e-15 && e.im.abs() < 1e-15);
        // 1 / (1 + e^{-1}(cos 0.3 - i sin 0.3)) by hand
        let z = Complex::new(1.0, 0.3);
        let (dr, di) = (1.0 + (-1f64).exp() * 0.3f64.cos(), -(-1f64).exp() * 0.3f64.sin());
        let den = dr * dr + di * di;
        let p = complex_link(z, Link::Logit).unwrap();
        assert!((p.re - dr / den).abs() < 1e-15 && (p.im + di / den).abs() < 1e-15);
        assert!(matches!(
            complex_link(Complex::real(-701.0), Link::Logit),
            Err(Error::Overflow { .. })
        ));
        assert!(complex_link(Complex::real(701.0), Link::Log).is_err());
        assert_eq!(
            complex_link(Complex::new(1e6, 2.0), Link::Identity).unwrap(),
            Complex::new(1e6, 2.0)
        );
    }

    #[test]
    fn zero_covariance_bank_is_exactly_zero() {
        let bank = draw_perturbations(5, 4, &MeCovariance::zero(2), 1).unwrap();
        assert!(bank.is_zero());
        assert!((0..5).all(|i| (0..4).all(|b| bank.draw_at(i, b) == [0.0, 0.0])));
    }

    #[test]
    fn banks_are_reproducible() {
        let s = MeCovariance::diagonal(&[0.2, 0.0]).unwrap();
        let a = draw_perturbations(20, 8, &s, 42).unwrap();
        let b = draw_perturbations(20, 8, &s, 42).unwrap();
        assert_eq!(a.eps, b.eps);
        assert!((0..20).all(|i| (0..8).all(|k| a.draw_at(i, k)[1] == 0.0)));
        let c = draw_perturbations(20, 8, &s, 43).unwrap();
        assert_ne!(a.eps, c.eps);
    }

    #[test]
    fn antithetic_pairs_negate() {
        let s = MeCovariance::diagonal(&[0.5]).unwrap();
        let bank = PerturbationBank::draw(&[3, 9], 5, &s, 1, true).unwrap();
        for i in 0..2 {
            assert_eq!(bank.draw_at(i, 0)[0], -bank.draw_at(i, 1)[0]);
            assert_eq!(bank.draw_at(i, 2)[0], -bank.draw_at(i, 3)[0]);
        }
        let mult: f64 = bank.distinct().map(|(_, w)| w).sum();
        assert_eq!(mult, 5.0);
    }

    #[test]
    fn zero_bank_mccs_equals_real_score() {
        let score = || Ols {
            y: vec![1.0, 2.5, -0.3],
            a: vec![0.2, 1.1, -0.7],
            params: vec![0, 1],
        };
        let bank = Arc::new(draw_perturbations(3, 16, &MeCovariance::zero(1), 5).unwrap());
        let cs = mccs_transform(score(), bank).unwrap();
        let naive = real_score(score());
        let th = [0.3, -0.8];
        for i in 0..3 {
            let mut x = [0.0; 2];
            let mut z = [0.0; 2];
            EstimatingFunction::eval(&cs, i, &th, &mut x).unwrap();
            EstimatingFunction::eval(&naive, i, &th, &mut z).unwrap();
            assert_eq!(x, z);
        }
    }

    #[test]
    fn linear_score_gets_attenuation_correction() {
        // Re{Ã (y - b0 - b1 Ã)} averages to a(y - b0) - b1(a² - σ²).
        let sigma2 = 0.3;
        let s = MeCovariance::diagonal(&[sigma2]).unwrap();
        let n_draws = 200_000;
        let bank = Arc::new(PerturbationBank::draw(&[11], n_draws, &s, 9, true).unwrap());
        let score = Ols {
            y: vec![1.4],
            a: vec![0.6],
            params: vec![0, 1],
        };
        let cs = mccs_transform(score, bank).unwrap();
        let th = [0.2, 0.9];
        let mut out = [0.0; 2];
        EstimatingFunction::eval(&cs, 0, &th, &mut out).unwrap();
        let (y, a) = (1.4, 0.6);
        assert!((out[0] - (y - th[0] - th[1] * a)).abs() < 1e-10);
        let target = a * (y - th[0]) - th[1] * (a * a - sigma2);
        // Var(ε̃²) = 2σ⁴, so the MC error of the mean is 0.9·σ²·√(2/(n/2))
        let se = th[1] * sigma2 * (2.0 / (n_draws as f64 / 2.0)).sqrt();
        assert!((out[1] - target).abs() < 4.0 * se, "{} vs {target}", out[1]);
    }

    #[test]
    fn closed_form_no_error_limit() {
        let ps = NormalPs {
            cond_mean: 0.3,
            delta2: 0.5,
            mu: 0.1,
            tau2: 0.9,
        };
        let (y, a, g) = (1.2, 0.7, [0.4, 0.6]);
        let out = closed_form_cs_ipw(y, a, 0.0, ps, g).unwrap();
        let sw = (ps.delta2 / ps.tau2).sqrt()
            * (-(a - ps.mu).powi(2) / (2.0 * ps.tau2) + (a - ps.cond_mean).powi(2) / (2.0 * ps.delta2)).exp();
        let r = y - g[0] - g[1] * a;
        assert!((out[0] - sw * r).abs() < 1e-12);
        assert!((out[1] - sw * r * a).abs() < 1e-12);
    }

    #[test]
    fn closed_form_unit_weights_reduce_to_corrected_ols() {
        let ps = NormalPs {
            cond_mean: 0.2,
            delta2: 0.7,
            mu: 0.2,
            tau2: 0.7,
        };
        let (y, a, s2, g) = (0.9, -0.4, 0.25, [0.1, 0.8]);
        let out = closed_form_cs_ipw(y, a, s2, ps, g).unwrap();
        assert!((out[0] - (y - g[0] - g[1] * a)).abs() < 1e-12);
        let corrected = a * (y - g[0]) - g[1] * (a * a - s2);
        assert!((out[1] - corrected).abs() < 1e-12);
    }

    #[test]
    fn closed_form_divergence() {
        let ps = NormalPs {
            cond_mean: 0.0,
            delta2: 2.0,
            mu: 0.0,
            tau2: 0.5,
        };
        // b1 = 0.5(0.5 - 2) = -0.75, 1 + 2·1·b1 = -0.5
        let err = closed_form_cs_ipw(0.0, 0.0, 1.0, ps, [0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DivergentCorrection { value } if (value + 0.5).abs() < 1e-12));
    }

    #[test]
    fn observation_keys_follow_rows() {
        let d = Dataset::builder()
            .outcome(vec![1.0, 2.0, 1.0])
            .exposure("a", vec![0.5, 0.1, 0.5])
            .build()
            .unwrap();
        let k = observation_keys(&d);
        assert_ne!(k[0], k[2]);
        let p = d.select_rows(&[1, 2, 0]).unwrap();
        let kp = observation_keys(&p);
        assert_eq!(kp[0], k[1]);
        let mut a = k.clone();
        let mut b = kp.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
