use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Positive semi-definite measurement-error covariance with a factor `F`
/// (`m x r`, `F Fᵀ = Σ`) for sampling possibly degenerate normal errors.
///
/// Exposures measured without error have an identically zero row and column
/// in `Σ`, and the matching row of `F` is exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MeCovariance {
    sigma: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl MeCovariance {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        factor_me_covariance(sigma)
    }

    /// All exposures measured without error.
    pub fn zero(m: usize) -> Self {
        MeCovariance {
            sigma: DMatrix::zeros(m, m),
            factor: DMatrix::zeros(m, 0),
        }
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(variances)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("measurement-error covariance must be square".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    #[inline]
    pub fn variance(&self, j: usize) -> f64 {
        self.sigma[(j, j)]
    }

    /// Exposure `j` is declared error-free (zero row in `Σ`).
    pub fn is_error_free(&self, j: usize) -> bool {
        self.sigma.row(j).iter().all(|v| *v == 0.0)
    }

    /// `out = F u` with `u` of length `rank()`.
    #[inline]
    pub fn apply_factor(&self, u: &[f64], out: &mut [f64]) {
        let m = self.dim();
        let r = self.rank();
        for (j, o) in out.iter_mut().enumerate().take(m) {
            let mut s = 0.0;
            for k in 0..r {
                s += self.factor[(j, k)] * u[k];
            }
            *o = s;
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.sigma.row(i).iter().copied().collect())
            .collect()
    }

    /// Same covariance multiplied by `scale >= 0`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::Argument(format!("covariance scale {scale} must be >= 0")));
        }
        Self::new(&self.sigma * scale)
    }
}

/// Validates a symmetric PSD matrix and computes a factor for sampling.
///
/// Zero rows are split off first so error-free exposures get exact zeros.
/// The remaining block uses the square root of a diagonal, a Cholesky factor
/// when positive definite, and otherwise an eigen-factor with eigenvalues
/// above `-1e-10 * λmax` clipped to zero.
pub fn factor_me_covariance(sigma: DMatrix<f64>) -> Result<MeCovariance> {
    let m = sigma.nrows();
    if sigma.ncols() != m {
        return Err(Error::Dimension(format!(
            "measurement-error covariance is {}x{}, expected square",
            m,
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "measurement-error covariance has non-finite entries".into(),
        ));
    }
    let scale = sigma.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Dimension(format!(
                    "measurement-error covariance is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let active: Vec<usize> = (0..m).filter(|&i| sigma.row(i).iter().any(|v| *v != 0.0)).collect();
    if active.is_empty() {
        return Ok(MeCovariance::zero(m));
    }
    let k = active.len();
    let sub = DMatrix::from_fn(k, k, |a, b| sigma[(active[a], active[b])]);

    let is_diagonal = (0..k).all(|a| (0..k).all(|b| a == b || sub[(a, b)] == 0.0));
    let sub_factor = if is_diagonal {
        if let Some(d) = sub.diagonal().iter().find(|d| **d < 0.0) {
            return Err(Error::NotPsd { min_eigenvalue: *d });
        }
        DMatrix::from_diagonal(&sub.diagonal().map(f64::sqrt))
    } else if let Some(chol) = sub.clone().cholesky() {
        chol.l()
    } else {
        let eig = SymmetricEigen::new(sub.clone());
        let max_ev = eig.eigenvalues.max();
        let min_ev = eig.eigenvalues.min();
        if min_ev < -PSD_TOL * max_ev.max(0.0) || max_ev <= 0.0 && min_ev < 0.0 {
            return Err(Error::NotPsd { min_eigenvalue: min_ev });
        }
        let keep: Vec<usize> = (0..k).filter(|&c| eig.eigenvalues[c] > PSD_TOL * max_ev).collect();
        DMatrix::from_fn(k, keep.len(), |row, c| {
            eig.eigenvectors[(row, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
        })
    };

    let r = sub_factor.ncols();
    let mut factor = DMatrix::zeros(m, r);
    for (a, &i) in active.iter().enumerate() {
        for c in 0..r {
            factor[(i, c)] = sub_factor[(a, c)];
        }
    }
    Ok(MeCovariance { sigma, factor })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruction_error(me: &MeCovariance) -> f64 {
        let f = me.factor();
        (f * f.transpose() - me.sigma()).amax()
    }

    #[test]
    fn diagonal_factor_is_elementwise_sqrt() {
        let me = MeCovariance::diagonal(&[0.2, 0.2]).unwrap();
        assert_eq!(me.rank(), 2);
        assert_eq!(me.factor()[(0, 0)], 0.2f64.sqrt());
        assert_eq!(me.factor()[(1, 1)], 0.2f64.sqrt());
        assert_eq!(me.factor()[(0, 1)], 0.0);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let me = MeCovariance::new(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(me.rank(), 0);
        assert!(me.is_zero());
        assert!(me.is_error_free(0) && me.is_error_free(1));
    }

    #[test]
    fn correlated_factor_reconstructs() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let me = MeCovariance::new(s).unwrap();
        assert!(reconstruction_error(&me) <= 1e-10);
    }

    #[test]
    fn singular_and_partially_error_free() {
        // rank-1 block on exposures 0 and 2, exposure 1 error free
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 4.0]);
        let me = MeCovariance::new(s).unwrap();
        assert_eq!(me.rank(), 1);
        assert!(reconstruction_error(&me) <= 1e-10 * 4.0);
        assert!(me.factor().row(1).iter().all(|v| *v == 0.0));
        assert!(me.is_error_free(1) && !me.is_error_free(0));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clipped() {
        let eps = 1e-13;
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - eps]);
        let me = MeCovariance::new(s).unwrap();
        assert_eq!(me.rank(), 1);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(MeCovariance::new(s), Err(Error::NotPsd { .. })));
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(matches!(MeCovariance::new(s), Err(Error::Dimension(_))));
        let s = DMatrix::from_row_slice(1, 2, &[1.0, 0.1]);
        assert!(matches!(MeCovariance::new(s), Err(Error::Dimension(_))));
        assert!(matches!(
            MeCovariance::diagonal(&[0.1, -0.1]),
            Err(Error::NotPsd { .. })
        ));
    }
}
