//! Generic M-estimation: stacked estimating equations, a damped Newton
//! solver with a central-difference Jacobian, empirical sandwich and
//! Fay-Graubard bias-corrected covariances, Wald intervals and the delta
//! method.
//!
//! Conventions: `A = Σ_i -∂ψ_i/∂θ` and `B = Σ_i ψ_i ψ_iᵀ` are kept as sums, so
//! the sandwich `A⁻¹ B A⁻ᵀ` is already the covariance of `θ̂` and the
//! leverages `diag(A_i A⁻¹)` are of order `q/n`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{FitResult, ParameterVector};
use crate::error::{Error, Result};

/// Leverage truncation for the bias-corrected sandwich.
pub const FAY_GRAUBARD_B: f64 = 0.75;

/// Per-observation estimating function `ψ(i, θ)` of dimension `dim()`.
pub trait EstimatingFunction: Sync {
    fn dim(&self) -> usize;
    fn n_obs(&self) -> usize;
    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()>;

    /// Rows of ψ that can change when `theta[k]` changes. The Jacobian is
    /// taken as zero outside these rows.
    fn dependent_rows(&self, _k: usize) -> Vec<Range<usize>> {
        vec![0..self.dim()]
    }

    /// Evaluates at least the given rows into `out`; other entries are
    /// unspecified.
    fn eval_rows(&self, i: usize, theta: &[f64], _rows: &[Range<usize>], out: &mut [f64]) -> Result<()> {
        self.eval(i, theta, out)
    }
}

/// Closure-backed estimating function.
pub struct FnEstimatingFunction<F> {
    dim: usize,
    n: usize,
    f: F,
}

impl<F> FnEstimatingFunction<F>
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, n: usize, f: F) -> Self {
        FnEstimatingFunction { dim, n, f }
    }
}

impl<F> EstimatingFunction for FnEstimatingFunction<F>
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_obs(&self) -> usize {
        self.n
    }
    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        (self.f)(i, theta, out);
        Ok(())
    }
}

/// One block of rows in a stacked estimating equation.
pub trait EquationBlock: Sync {
    fn label(&self) -> &str;
    fn rows(&self) -> usize;
    /// Indices into the full θ that this block reads.
    fn params(&self) -> &[usize];
    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Vertically stacked equation blocks sharing one parameter vector, with
/// optional observation weights multiplying every row.
pub struct Stack<'a> {
    blocks: Vec<Box<dyn EquationBlock + 'a>>,
    offsets: Vec<usize>,
    dim: usize,
    n: usize,
    weights: Option<Vec<f64>>,
    /// For each parameter, the blocks whose rows depend on it.
    param_blocks: Vec<Vec<usize>>,
}

impl<'a> Stack<'a> {
    pub fn new(n: usize, n_params: usize, blocks: Vec<Box<dyn EquationBlock + 'a>>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        let mut param_blocks = vec![Vec::new(); n_params];
        for (b, block) in blocks.iter().enumerate() {
            offsets.push(dim);
            dim += block.rows();
            for &k in block.params() {
                if k >= n_params {
                    return Err(Error::Dimension(format!(
                        "block `{}` reads parameter {k} of {n_params}",
                        block.label()
                    )));
                }
                param_blocks[k].push(b);
            }
        }
        if dim != n_params {
            return Err(Error::Dimension(format!(
                "stack has {dim} equations for {n_params} parameters"
            )));
        }
        Ok(Stack {
            blocks,
            offsets,
            dim,
            n,
            weights: None,
            param_blocks,
        })
    }

    pub fn with_weights(mut self, weights: Option<Vec<f64>>) -> Result<Self> {
        if let Some(w) = &weights {
            if w.len() != self.n {
                return Err(Error::Dimension("stack weights length differs from n".into()));
            }
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn block_labels(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.label()).collect()
    }

    fn eval_block(&self, b: usize, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        let lo = self.offsets[b];
        let hi = lo + self.blocks[b].rows();
        let dst = &mut out[lo..hi];
        self.blocks[b].eval(i, theta, dst)?;
        if let Some(w) = &self.weights {
            let wi = w[i];
            for v in dst.iter_mut() {
                *v *= wi;
            }
        }
        Ok(())
    }
}

impl EstimatingFunction for Stack<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_obs(&self) -> usize {
        self.n
    }

    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        for b in 0..self.blocks.len() {
            self.eval_block(b, i, theta, out)?;
        }
        Ok(())
    }

    fn dependent_rows(&self, k: usize) -> Vec<Range<usize>> {
        self.param_blocks[k]
            .iter()
            .map(|&b| self.offsets[b]..self.offsets[b] + self.blocks[b].rows())
            .collect()
    }

    fn eval_rows(&self, i: usize, theta: &[f64], rows: &[Range<usize>], out: &mut [f64]) -> Result<()> {
        for b in 0..self.blocks.len() {
            let lo = self.offsets[b];
            let hi = lo + self.blocks[b].rows();
            if rows.iter().any(|r| r.start < hi && lo < r.end) {
                self.eval_block(b, i, theta, out)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial step scale; halved on residual increase down to `1/64`.
    pub damping: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 100,
            damping: 1.0,
            fd_step: f64::EPSILON.cbrt(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.fd_step > 0.0) || !(self.damping > 0.0) {
            return Err(Error::Argument(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

const MIN_DAMPING: f64 = 1.0 / 64.0;

/// Outcome of the root search, before variance estimation.
#[derive(Clone, Debug)]
pub struct Root {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

fn check_finite(v: &[f64], context: &str, theta: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(context, theta))
    }
}

/// `Σ_i ψ(i, θ)`.
pub fn sum_psi<E: EstimatingFunction + ?Sized>(psi: &E, theta: &[f64]) -> Result<Vec<f64>> {
    let q = psi.dim();
    let mut total = vec![0.0; q];
    let mut buf = vec![0.0; q];
    for i in 0..psi.n_obs() {
        psi.eval(i, theta, &mut buf)?;
        for (t, b) in total.iter_mut().zip(&buf) {
            *t += b;
        }
    }
    check_finite(&total, "estimating function", theta)?;
    Ok(total)
}

#[inline]
fn fd_width(fd_step: f64, x: f64) -> f64 {
    fd_step * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f` at `theta`, step `fd_step·max(1,|θ_j|)`.
pub fn numerical_jacobian<F>(f: F, theta: &[f64], fd_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = theta.to_vec();
    let mut cols = Vec::with_capacity(theta.len());
    let mut rows = None;
    for j in 0..theta.len() {
        let h = fd_width(fd_step, theta[j]);
        x[j] = theta[j] + h;
        let up = f(&x)?;
        x[j] = theta[j] - h;
        let down = f(&x)?;
        x[j] = theta[j];
        let rows_j = *rows.get_or_insert(up.len());
        if up.len() != rows_j || down.len() != rows_j {
            return Err(Error::Dimension("function output length changed".into()));
        }
        let col: Vec<f64> = up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect();
        check_finite(&col, "numerical Jacobian", &x)?;
        cols.push(col);
    }
    let r = rows.unwrap_or(0);
    Ok(DMatrix::from_fn(r, theta.len(), |i, j| cols[j][i]))
}

/// Jacobian of `Σ_i ψ_i` exploiting `dependent_rows`.
pub fn jacobian_of_sum<E: EstimatingFunction + ?Sized>(psi: &E, theta: &[f64], fd_step: f64) -> Result<DMatrix<f64>> {
    let q = psi.dim();
    let mut jac = DMatrix::zeros(q, theta.len());
    let mut x = theta.to_vec();
    let mut up = vec![0.0; q];
    let mut down = vec![0.0; q];
    for k in 0..theta.len() {
        let rows = psi.dependent_rows(k);
        if rows.is_empty() {
            continue;
        }
        let h = fd_width(fd_step, theta[k]);
        let mut acc = vec![0.0; q];
        for i in 0..psi.n_obs() {
            x[k] = theta[k] + h;
            psi.eval_rows(i, &x, &rows, &mut up)?;
            x[k] = theta[k] - h;
            psi.eval_rows(i, &x, &rows, &mut down)?;
            for r in &rows {
                for row in r.clone() {
                    acc[row] += up[row] - down[row];
                }
            }
        }
        x[k] = theta[k];
        for r in &rows {
            for row in r.clone() {
                jac[(row, k)] = acc[row] / (2.0 * h);
            }
        }
    }
    check_finite(jac.as_slice(), "numerical Jacobian", theta)?;
    Ok(jac)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn newton_step(jac: &DMatrix<f64>, resid: &[f64]) -> Option<DVector<f64>> {
    let rhs = -DVector::from_column_slice(resid);
    if let Some(step) = jac.clone().lu().solve(&rhs) {
        if step.iter().all(|v| v.is_finite()) {
            return Some(step);
        }
    }
    let svd = jac.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12;
    svd.solve(&rhs, tol)
        .ok()
        .filter(|s| s.iter().all(|v| v.is_finite()) && s.iter().any(|v| *v != 0.0))
}

/// Damped Newton search for `Σ_i ψ(i, θ) = 0`.
///
/// Stops when `‖Σψ‖∞ ≤ tol·n`. A step is halved while the squared residual
/// norm increases; at the `1/64` floor the step is taken as long as the
/// residual stays finite. A stale Jacobian is refreshed instead of taking a
/// non-improving step. A singular or non-finite direction from a fresh
/// Jacobian ends the search with `converged = false` and the best iterate.
pub fn solve<E: EstimatingFunction + ?Sized>(psi: &E, theta0: &[f64], opts: &SolveOptions) -> Result<Root> {
    opts.validate()?;
    if theta0.len() != psi.dim() {
        return Err(Error::Dimension(format!(
            "starting value has {} entries, estimating function has {}",
            theta0.len(),
            psi.dim()
        )));
    }
    let tol_abs = opts.tol * psi.n_obs() as f64;
    let mut theta = theta0.to_vec();
    let mut resid = sum_psi(psi, &theta)?;
    let mut iterations = 0;
    let mut best = (max_abs(&resid), theta.clone());

    // The Jacobian is kept across iterations while full steps keep cutting
    // the squared residual by at least a factor of four.
    let mut jac: Option<DMatrix<f64>> = None;
    while max_abs(&resid) > tol_abs && iterations < opts.max_iter {
        iterations += 1;
        let fresh = jac.is_none();
        if fresh {
            match jacobian_of_sum(psi, &theta, opts.fd_step) {
                Ok(j) => jac = Some(j),
                Err(_) => break,
            }
        }
        let Some(step) = newton_step(jac.as_ref().expect("set above"), &resid) else {
            if fresh {
                break;
            }
            jac = None;
            continue;
        };
        let merit = sum_sq(&resid);
        let mut lambda = opts.damping;
        let mut accepted = None;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + lambda * s).collect();
            let trial = sum_psi(psi, &cand).ok();
            match trial {
                Some(r) if sum_sq(&r) < merit => {
                    accepted = Some((cand, r));
                    break;
                }
                Some(r) if lambda * 0.5 < MIN_DAMPING && fresh => {
                    accepted = Some((cand, r));
                    break;
                }
                _ if lambda * 0.5 < MIN_DAMPING => break,
                _ => lambda *= 0.5,
            }
        }
        let Some((cand, r)) = accepted else {
            if fresh {
                break;
            }
            jac = None;
            continue;
        };
        if lambda < opts.damping || sum_sq(&r) > 0.25 * merit {
            jac = None;
        }
        theta = cand;
        resid = r;
        let norm = max_abs(&resid);
        if norm < best.0 {
            best = (norm, theta.clone());
        }
    }

    let norm = max_abs(&resid);
    if norm <= tol_abs {
        return Ok(Root {
            theta,
            converged: true,
            iterations,
            max_residual: norm,
        });
    }
    Ok(Root {
        theta: best.1,
        converged: false,
        iterations,
        max_residual: best.0,
    })
}

/// Bread, meat and both sandwich covariances at a root.
#[derive(Clone, Debug)]
pub struct Sandwich {
    /// `Σ_i -∂ψ_i/∂θ`.
    pub bread: DMatrix<f64>,
    /// `Σ_i ψ_i ψ_iᵀ`.
    pub meat: DMatrix<f64>,
    pub vcov_uc: DMatrix<f64>,
    pub vcov_bc: DMatrix<f64>,
}

/// Per-observation Jacobians are cached when `n·q²` stays below this many
/// entries; larger problems recompute them in a second pass.
const JACOBIAN_CACHE_LIMIT: usize = 1 << 23;

fn invert_bread(bread: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = bread.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e14) {
        return Err(Error::SingularBread { condition });
    }
    bread.clone().try_inverse().ok_or(Error::SingularBread { condition })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Calls `visit(i, k, rows, column)` with `column[row] = -∂ψ_i[row]/∂θ_k` for
/// every observation and parameter.
fn for_each_obs_jacobian_column<E, V>(psi: &E, theta: &[f64], fd_step: f64, mut visit: V) -> Result<()>
where
    E: EstimatingFunction + ?Sized,
    V: FnMut(usize, usize, &[Range<usize>], &[f64]),
{
    let q = psi.dim();
    let mut x = theta.to_vec();
    let mut up = vec![0.0; q];
    let mut down = vec![0.0; q];
    let mut col = vec![0.0; q];
    for k in 0..theta.len() {
        let rows = psi.dependent_rows(k);
        if rows.is_empty() {
            continue;
        }
        let h = fd_width(fd_step, theta[k]);
        for i in 0..psi.n_obs() {
            x[k] = theta[k] + h;
            psi.eval_rows(i, &x, &rows, &mut up)?;
            x[k] = theta[k] - h;
            psi.eval_rows(i, &x, &rows, &mut down)?;
            for r in &rows {
                for row in r.clone() {
                    col[row] = -(up[row] - down[row]) / (2.0 * h);
                }
            }
            check_finite(&col, "observation Jacobian", &x)?;
            visit(i, k, &rows, &col);
        }
        x[k] = theta[k];
    }
    Ok(())
}

/// Empirical sandwich and bias-corrected sandwich at `theta_hat`.
pub fn sandwich<E: EstimatingFunction + ?Sized>(psi: &E, theta_hat: &[f64], fd_step: f64) -> Result<Sandwich> {
    let q = psi.dim();
    let n = psi.n_obs();
    if theta_hat.len() != q {
        return Err(Error::Dimension("theta_hat length differs from psi dimension".into()));
    }

    let mut psis = vec![0.0; n * q];
    let mut meat = DMatrix::zeros(q, q);
    for i in 0..n {
        let row = &mut psis[i * q..(i + 1) * q];
        psi.eval(i, theta_hat, row)?;
        check_finite(row, "estimating function", theta_hat)?;
        for a in 0..q {
            for b in 0..=a {
                meat[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            meat[(b, a)] = meat[(a, b)];
        }
    }

    let cache = n.saturating_mul(q * q) <= JACOBIAN_CACHE_LIMIT;
    let mut per_obs = if cache { vec![0.0; n * q * q] } else { Vec::new() };
    let mut bread = DMatrix::zeros(q, q);
    for_each_obs_jacobian_column(psi, theta_hat, fd_step, |i, k, rows, col| {
        for r in rows {
            for row in r.clone() {
                bread[(row, k)] += col[row];
                if cache {
                    per_obs[i * q * q + row * q + k] = col[row];
                }
            }
        }
    })?;

    let bread_inv = invert_bread(&bread)?;
    let vcov_uc = symmetrize(&bread_inv * &meat * bread_inv.transpose());

    // leverage[i][j] = (A_i A⁻¹)_jj
    let mut leverage = vec![0.0; n * q];
    if cache {
        for i in 0..n {
            let ai = &per_obs[i * q * q..(i + 1) * q * q];
            for j in 0..q {
                let mut s = 0.0;
                for k in 0..q {
                    s += ai[j * q + k] * bread_inv[(k, j)];
                }
                leverage[i * q + j] = s;
            }
        }
    } else {
        for_each_obs_jacobian_column(psi, theta_hat, fd_step, |i, k, rows, col| {
            for r in rows {
                for row in r.clone() {
                    leverage[i * q + row] += col[row] * bread_inv[(k, row)];
                }
            }
        })?;
    }

    let mut meat_bc = DMatrix::zeros(q, q);
    let mut adj = vec![0.0; q];
    for i in 0..n {
        for j in 0..q {
            let h = leverage[i * q + j].min(FAY_GRAUBARD_B);
            adj[j] = psis[i * q + j] / (1.0 - h).sqrt();
        }
        for a in 0..q {
            for b in 0..=a {
                meat_bc[(a, b)] += adj[a] * adj[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            meat_bc[(b, a)] = meat_bc[(a, b)];
        }
    }
    let vcov_bc = symmetrize(&bread_inv * &meat_bc * bread_inv.transpose());
    Ok(Sandwich {
        bread,
        meat,
        vcov_uc,
        vcov_bc,
    })
}

/// `A⁻¹ B A⁻ᵀ / n` with `A`, `B` the average bread and meat.
pub fn sandwich_variance<E: EstimatingFunction + ?Sized>(psi: &E, theta_hat: &[f64]) -> Result<DMatrix<f64>> {
    Ok(sandwich(psi, theta_hat, SolveOptions::default().fd_step)?.vcov_uc)
}

/// Fay-Graubard sandwich with leverage truncation `b = 0.75`.
pub fn bias_corrected_variance<E: EstimatingFunction + ?Sized>(psi: &E, theta_hat: &[f64]) -> Result<DMatrix<f64>> {
    Ok(sandwich(psi, theta_hat, SolveOptions::default().fd_step)?.vcov_bc)
}

/// Solves from `theta0` and, on convergence, attaches both sandwich
/// covariances. Non-converged fits carry NaN covariances.
pub fn fit<E: EstimatingFunction + ?Sized>(
    psi: &E,
    theta0: &ParameterVector,
    opts: &SolveOptions,
) -> Result<FitResult> {
    let root = solve(psi, theta0.values(), opts)?;
    let q = psi.dim();
    let (vcov_uc, vcov_bc) = if root.converged {
        let s = sandwich(psi, &root.theta, opts.fd_step)?;
        (s.vcov_uc, s.vcov_bc)
    } else {
        (
            DMatrix::from_element(q, q, f64::NAN),
            DMatrix::from_element(q, q, f64::NAN),
        )
    };
    Ok(FitResult {
        theta_hat: theta0.with_values(root.theta)?,
        vcov_uc,
        vcov_bc,
        converged: root.converged,
        iterations: root.iterations,
        max_residual: root.max_residual,
    })
}

/// Standard normal quantile `z_{1-α/2}`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha = {alpha} must lie in (0, 1)")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(1.0 - alpha / 2.0))
}

/// `estimate ± z_{1-α/2}·se`.
pub fn wald_ci(estimate: f64, se: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(se >= 0.0) {
        return Err(Error::Argument(format!("standard error {se} must be >= 0")));
    }
    let z = normal_quantile(alpha)?;
    Ok((estimate - z * se, estimate + z * se))
}

/// Delta-method estimate and standard error of a smooth scalar `g(θ)`.
pub fn delta_method<G>(g: G, theta_hat: &[f64], vcov: &DMatrix<f64>) -> Result<(f64, f64)>
where
    G: Fn(&[f64]) -> f64,
{
    let q = theta_hat.len();
    if vcov.nrows() != q || vcov.ncols() != q {
        return Err(Error::Dimension("vcov does not match theta".into()));
    }
    let est = g(theta_hat);
    let grad = numerical_jacobian(|t| Ok(vec![g(t)]), theta_hat, SolveOptions::default().fd_step)?;
    let grad = DVector::from_iterator(q, grad.iter().copied());
    if grad.iter().any(|v| !v.is_finite()) || !est.is_finite() {
        return Err(Error::numeric("delta-method gradient", theta_hat));
    }
    let var = (grad.transpose() * vcov * &grad)[(0, 0)];
    Ok((est, var.max(0.0).sqrt()))
}

/// Delta method for a linear contrast `cᵀθ`, computed exactly.
pub fn linear_contrast(coef: &[f64], theta_hat: &[f64], vcov: &DMatrix<f64>) -> (f64, f64) {
    let c = DVector::from_column_slice(coef);
    let est = coef.iter().zip(theta_hat).map(|(a, b)| a * b).sum();
    let var = (c.transpose() * vcov * &c)[(0, 0)];
    (est, var.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mean_psi(y: Vec<f64>) -> FnEstimatingFunction<impl Fn(usize, &[f64], &mut [f64]) + Sync> {
        let n = y.len();
        FnEstimatingFunction::new(1, n, move |i, th, out| out[0] = y[i] - th[0])
    }

    #[test]
    fn sample_mean_root() {
        let psi = mean_psi(vec![1.0, 2.0, 3.0]);
        let root = solve(&psi, &[0.0], &SolveOptions::default()).unwrap();
        assert!(root.converged);
        assert_relative_eq!(root.theta[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn affine_root() {
        let psi = FnEstimatingFunction::new(1, 4, |_, th: &[f64], out: &mut [f64]| out[0] = th[0] - 5.0);
        let root = solve(&psi, &[0.0], &SolveOptions::default()).unwrap();
        assert!(root.converged);
        assert_relative_eq!(root.theta[0], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn resolving_from_root_takes_no_iterations() {
        let psi = mean_psi(vec![1.0, 2.0, 3.0, 10.0]);
        let root = solve(&psi, &[0.0], &SolveOptions::default()).unwrap();
        let again = solve(&psi, &root.theta, &SolveOptions::default()).unwrap();
        assert!(again.converged && again.iterations <= 2);
    }

    #[test]
    fn mean_sandwich_closed_form() {
        let psi = mean_psi(vec![1.0, 2.0, 3.0]);
        let v = sandwich_variance(&psi, &[2.0]).unwrap();
        assert_relative_eq!(v[(0, 0)], 2.0 / 9.0, epsilon = 1e-9);
    }

    #[test]
    fn equal_leverage_bias_correction() {
        let y = vec![0.3, 1.2, -0.7, 2.2, 0.9];
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let psi = mean_psi(y);
        let s = sandwich(&psi, &[mean], SolveOptions::default().fd_step).unwrap();
        assert_relative_eq!(
            s.vcov_bc[(0, 0)],
            s.vcov_uc[(0, 0)] / (1.0 - 1.0 / n),
            max_relative = 1e-9
        );
    }

    #[test]
    fn jacobian_of_linear_map() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let j = numerical_jacobian(
            |t| Ok((&m * DVector::from_column_slice(t)).iter().copied().collect()),
            &[0.3, -1.2],
            f64::EPSILON.cbrt(),
        )
        .unwrap();
        assert!((j - &m).amax() < 1e-8);
    }

    #[test]
    fn jacobian_of_squares() {
        let j = numerical_jacobian(|t| Ok(vec![t[0] * t[0], t[1] * t[1]]), &[1.0, 2.0], f64::EPSILON.cbrt()).unwrap();
        assert!((j - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]))).amax() < 1e-6);
    }

    #[test]
    fn non_finite_psi_is_a_domain_error() {
        let psi = FnEstimatingFunction::new(1, 2, |_, th: &[f64], out: &mut [f64]| out[0] = th[0].ln());
        let err = solve(&psi, &[-1.0], &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NumericDomain { ref theta, .. } if theta == &vec![-1.0]));
    }

    #[test]
    fn singular_jacobian_reports_non_convergence() {
        // ψ = θ² + 1 has no real root; Newton wanders and must stop cleanly.
        let psi = FnEstimatingFunction::new(1, 1, |_, th: &[f64], out: &mut [f64]| out[0] = th[0] * th[0] + 1.0);
        let opts = SolveOptions {
            max_iter: 30,
            ..Default::default()
        };
        let root = solve(&psi, &[0.0], &opts).unwrap();
        assert!(!root.converged);
        assert!(root.max_residual >= 1.0);
    }

    #[test]
    fn wald_intervals() {
        let (lo, hi) = wald_ci(0.0, 1.0, 0.05).unwrap();
        assert_relative_eq!(hi, 1.959963984540054, epsilon = 1e-9);
        assert_relative_eq!(lo, -hi);
        assert_eq!(wald_ci(2.0, 0.0, 0.05).unwrap(), (2.0, 2.0));
        let (lo, hi) = wald_ci(0.475, 0.079, 0.05).unwrap();
        assert!((lo - 0.320).abs() < 5e-4 && (hi - 0.630).abs() < 5e-4);
        assert!(wald_ci(0.0, 1.0, 0.0).is_err());
        assert!(wald_ci(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn delta_method_linear_cases() {
        let v = DMatrix::from_element(1, 1, 4.0);
        let (e, se) = delta_method(|t| t[0], &[3.0], &v).unwrap();
        assert_eq!(e, 3.0);
        assert_relative_eq!(se, 2.0, epsilon = 1e-8);
        let (e, se) = delta_method(|t| t[0] - t[1], &[1.0, 0.5], &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(e, 0.5);
        assert_relative_eq!(se, 2f64.sqrt(), epsilon = 1e-8);
    }

    struct Shift {
        params: Vec<usize>,
        c: f64,
    }
    impl EquationBlock for Shift {
        fn label(&self) -> &str {
            "shift"
        }
        fn rows(&self) -> usize {
            1
        }
        fn params(&self) -> &[usize] {
            &self.params
        }
        fn eval(&self, _i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = self.c - theta[self.params[0]] + 0.5 * self.params.get(1).map_or(0.0, |&k| theta[k]);
            Ok(())
        }
    }

    #[test]
    fn stack_dependent_rows_and_weights() {
        let blocks: Vec<Box<dyn EquationBlock>> = vec![
            Box::new(Shift {
                params: vec![0],
                c: 1.0,
            }),
            Box::new(Shift {
                params: vec![1, 0],
                c: 2.0,
            }),
        ];
        let stack = Stack::new(3, 2, blocks)
            .unwrap()
            .with_weights(Some(vec![1.0, 2.0, 0.0]))
            .unwrap();
        assert_eq!(stack.dependent_rows(0), vec![0..1, 1..2]);
        assert_eq!(stack.dependent_rows(1), vec![1..2]);
        let root = solve(&stack, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert!(root.converged);
        assert_relative_eq!(root.theta[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(root.theta[1], 2.5, epsilon = 1e-10);
        let mut out = [0.0; 2];
        stack.eval(1, &[0.0, 0.0], &mut out).unwrap();
        assert_eq!(out, [2.0, 4.0]);
    }
}
