//! Minimal complex arithmetic for evaluating estimating functions at complex
//! exposures.
//!
//! Every operation reduces to the corresponding real operation when both
//! imaginary parts are zero, bit for bit. The corrected-score code relies on
//! this so that a zero measurement-error covariance reproduces the naive fit
//! exactly.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Real parts above this magnitude are rejected before exponentiation.
pub const EXP_GUARD: f64 = 700.0;

#[derive(Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl fmt::Debug for Complex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:+}i", self.re, self.im)
    }
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };
    pub const ONE: Complex = Complex { re: 1.0, im: 0.0 };
    pub const I: Complex = Complex { re: 0.0, im: 1.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub const fn real(re: f64) -> Self {
        Complex { re, im: 0.0 }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    #[inline]
    pub fn scale(self, k: f64) -> Self {
        Complex::new(self.re * k, self.im * k)
    }

    /// `exp(re) * (cos(im) + i sin(im))`. Callers that need the overflow
    /// guard use [`Complex::checked_exp`].
    #[inline]
    pub fn exp(self) -> Self {
        let m = self.re.exp();
        if self.im == 0.0 {
            return Complex::new(m, self.im * m);
        }
        let (s, c) = self.im.sin_cos();
        Complex::new(m * c, m * s)
    }

    /// Exponential with the `|Re| > 700` guard; returns the offending real
    /// part on failure.
    #[inline]
    pub fn checked_exp(self) -> Result<Self, f64> {
        if !(self.re.abs() <= EXP_GUARD) {
            return Err(self.re);
        }
        Ok(self.exp())
    }

    #[inline]
    pub fn recip(self) -> Self {
        Complex::ONE / self
    }

    /// Integer power by repeated multiplication.
    #[inline]
    pub fn powi(self, p: u32) -> Self {
        match p {
            0 => Complex::ONE,
            1 => self,
            _ => {
                let mut acc = self;
                for _ in 1..p {
                    acc = acc * self;
                }
                acc
            }
        }
    }
}

impl From<f64> for Complex {
    fn from(re: f64) -> Self {
        Complex::real(re)
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Add<f64> for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, o: f64) -> Complex {
        Complex::new(self.re + o, self.im)
    }
}

impl AddAssign for Complex {
    #[inline]
    fn add_assign(&mut self, o: Complex) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Sub<Complex> for f64 {
    type Output = Complex;
    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self - o.re, -o.im)
    }
}

impl Sub<f64> for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, o: f64) -> Complex {
        Complex::new(self.re - o, self.im)
    }
}

impl SubAssign for Complex {
    #[inline]
    fn sub_assign(&mut self, o: Complex) {
        self.re -= o.re;
        self.im -= o.im;
    }
}

impl Neg for Complex {
    type Output = Complex;
    #[inline]
    fn neg(self) -> Complex {
        Complex::new(-self.re, -self.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, o: Complex) -> Complex {
        if self.im == 0.0 && o.im == 0.0 {
            return Complex::new(self.re * o.re, 0.0);
        }
        Complex::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
}

impl Mul<f64> for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, k: f64) -> Complex {
        self.scale(k)
    }
}

impl Mul<Complex> for f64 {
    type Output = Complex;
    #[inline]
    fn mul(self, z: Complex) -> Complex {
        z.scale(self)
    }
}

impl MulAssign for Complex {
    #[inline]
    fn mul_assign(&mut self, o: Complex) {
        *self = *self * o;
    }
}

impl Div for Complex {
    type Output = Complex;
    /// Smith's algorithm; exact real division when the divisor is real.
    #[inline]
    fn div(self, d: Complex) -> Complex {
        if d.im == 0.0 {
            return Complex::new(self.re / d.re, self.im / d.re);
        }
        if d.im.abs() <= d.re.abs() {
            let r = d.im / d.re;
            let den = d.re + d.im * r;
            Complex::new((self.re + self.im * r) / den, (self.im - self.re * r) / den)
        } else {
            let r = d.re / d.im;
            let den = d.re * r + d.im;
            Complex::new((self.re * r + self.im) / den, (self.im * r - self.re) / den)
        }
    }
}

impl Div<f64> for Complex {
    type Output = Complex;
    #[inline]
    fn div(self, k: f64) -> Complex {
        Complex::new(self.re / k, self.im / k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn euler_identity() {
        let z = Complex::new(0.0, PI).exp();
        assert!((z.re + 1.0).abs() < 1e-15);
        assert!(z.im.abs() < 1e-15);
    }

    #[test]
    fn real_inputs_reduce_exactly() {
        let a = Complex::real(1.7);
        let b = Complex::real(-0.3);
        assert_eq!((a * b).re, 1.7 * -0.3);
        assert_eq!((a / b).re, 1.7 / -0.3);
        assert_eq!(a.exp().re, 1.7f64.exp());
        assert_eq!((a * b).im, 0.0);
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = Complex::new(0.3, -2.0);
        let b = Complex::new(-1.5, 4.0);
        let q = (a * b) / b;
        assert!((q.re - a.re).abs() < 1e-14 && (q.im - a.im).abs() < 1e-14);
        let q = (a * b) / a;
        assert!((q.re - b.re).abs() < 1e-14 && (q.im - b.im).abs() < 1e-14);
    }

    #[test]
    fn powers_match_products() {
        let z = Complex::new(0.7, 0.4);
        let p3 = z.powi(3);
        let direct = z * z * z;
        assert_eq!(p3, direct);
        // Re{(a + i e)^2} = a^2 - e^2
        let sq = z.powi(2);
        assert!((sq.re - (0.49 - 0.16)).abs() < 1e-15);
        assert!((sq.im - 2.0 * 0.7 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn guard_rejects_large_real_parts() {
        assert!(Complex::new(701.0, 0.0).checked_exp().is_err());
        assert!(Complex::new(-701.0, 0.0).checked_exp().is_err());
        assert!(Complex::new(f64::NAN, 0.0).checked_exp().is_err());
        assert!(Complex::new(699.0, 1.0).checked_exp().is_ok());
    }
}
