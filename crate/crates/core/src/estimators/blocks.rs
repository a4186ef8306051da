//! Equation blocks shared by the g-formula, IPW and doubly-robust stacks.

use crate::complex::Complex;
use crate::cscore::{complex_link_with_derivative, ComplexScore};
use crate::data::Dataset;
use crate::error::Result;
use crate::mestim::EquationBlock;
use crate::models::{stabilized_weight_with, OutcomeModel, PropensityModel, PsPart};

/// Where the weight multiplying a regression score comes from.
pub(crate) enum Weighting {
    None,
    /// Stabilized weights with fixed parameters.
    Fixed(PropensityModel),
    /// Stabilized weights whose parameters sit in θ starting at `offset`.
    Theta {
        parts: Vec<PsPart>,
        offset: usize,
        len: usize,
    },
}

/// `w(L, A) {Y - μ(L, A; β)} ∂μ/∂β` with `A` possibly complex. Used for the
/// outcome score (g-formula, DR) and for the MSM score (IPW).
pub(crate) struct RegressionScore<'a> {
    pub label: String,
    pub data: &'a Dataset,
    pub model: OutcomeModel,
    pub coef_offset: usize,
    pub weighting: Weighting,
    /// Upper cap for real stabilized weights.
    pub cap: Option<f64>,
    pub params: Vec<usize>,
}

impl<'a> RegressionScore<'a> {
    pub fn new(
        label: impl Into<String>,
        data: &'a Dataset,
        model: OutcomeModel,
        coef_offset: usize,
        weighting: Weighting,
        cap: Option<f64>,
    ) -> Self {
        let mut params: Vec<usize> = (coef_offset..coef_offset + model.ncoef()).collect();
        if let Weighting::Theta { offset, len, .. } = &weighting {
            params.extend(*offset..*offset + *len);
        }
        RegressionScore {
            label: label.into(),
            data,
            model,
            coef_offset,
            weighting,
            cap,
            params,
        }
    }

    fn weight(&self, l: &[f64], a: &[Complex], theta: &[f64]) -> Result<Complex> {
        let w = match &self.weighting {
            Weighting::None => return Ok(Complex::ONE),
            Weighting::Fixed(model) => model.stabilized_weight(l, a)?,
            Weighting::Theta { parts, offset, len } => {
                stabilized_weight_with(parts, &theta[*offset..*offset + *len], l, a)?
            }
        };
        Ok(match self.cap {
            Some(cap) if w.re > cap => Complex::new(cap, w.im),
            _ => w,
        })
    }
}

const STACK_COLUMNS: usize = 32;

impl ComplexScore for RegressionScore<'_> {
    fn label(&self) -> &str {
        &self.label
    }

    fn rows(&self) -> usize {
        self.model.ncoef()
    }

    fn n_obs(&self) -> usize {
        self.data.n()
    }

    fn params(&self) -> &[usize] {
        &self.params
    }

    fn exposure(&self, i: usize) -> &[f64] {
        self.data.exposure_row(i)
    }

    fn eval(&self, i: usize, a: &[Complex], theta: &[f64], out: &mut [Complex]) -> Result<()> {
        let p = self.model.ncoef();
        let beta = &theta[self.coef_offset..self.coef_offset + p];
        let l = self.data.covariate_row(i);
        let mut buf = [Complex::ZERO; STACK_COLUMNS];
        let mut heap = Vec::new();
        let grad: &mut [Complex] = if p <= STACK_COLUMNS {
            &mut buf[..p]
        } else {
            heap.resize(p, Complex::ZERO);
            &mut heap
        };
        let mu = self.model.mean_gradient(beta, l, a, grad)?;
        let w = self.weight(l, a, theta)?;
        let r = (Complex::real(self.data.y()[i]) - mu) * w;
        for (o, g) in out.iter_mut().zip(grad.iter()) {
            *o = r * *g;
        }
        Ok(())
    }
}

/// `η(a_g) - μ(L_i, a_g; β)` for every grid point `a_g`.
pub(crate) struct Standardization {
    link: crate::models::Link,
    p: usize,
    n_grid: usize,
    /// Design rows `x(L_i, a_g)`, laid out `[i][g][k]`.
    x: Vec<f64>,
    coef_offset: usize,
    eta_offset: usize,
    params: Vec<usize>,
}

impl Standardization {
    pub fn new(data: &Dataset, model: &OutcomeModel, grid: &[Vec<f64>], coef_offset: usize, eta_offset: usize) -> Self {
        let p = model.ncoef();
        let g = grid.len();
        let mut x = vec![0.0; data.n() * g * p];
        for i in 0..data.n() {
            for (k, a) in grid.iter().enumerate() {
                let base = (i * g + k) * p;
                model.design.row_real(data.covariate_row(i), a, &mut x[base..base + p]);
            }
        }
        let params = (coef_offset..coef_offset + p)
            .chain(eta_offset..eta_offset + g)
            .collect();
        Standardization {
            link: model.link,
            p,
            n_grid: g,
            x,
            coef_offset,
            eta_offset,
            params,
        }
    }
}

impl EquationBlock for Standardization {
    fn label(&self) -> &str {
        "standardization"
    }

    fn rows(&self) -> usize {
        self.n_grid
    }

    fn params(&self) -> &[usize] {
        &self.params
    }

    fn eval(&self, i: usize, theta: &[f64], out: &mut [f64]) -> Result<()> {
        let beta = &theta[self.coef_offset..self.coef_offset + self.p];
        for (g, o) in out.iter_mut().enumerate().take(self.n_grid) {
            let base = (i * self.n_grid + g) * self.p;
            let lp: f64 = self.x[base..base + self.p].iter().zip(beta).map(|(x, b)| x * b).sum();
            let (mu, _) = complex_link_with_derivative(Complex::real(lp), self.link)?;
            *o = theta[self.eta_offset + g] - mu.re;
        }
        Ok(())
    }
}
