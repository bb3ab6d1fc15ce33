//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All model code is written against [`Real`], which is implemented for `f32`
//! and `f64`. Special functions (log-gamma, normal CDF, Student-t quantiles)
//! and the random-variate generators are evaluated in `f64` and converted.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by the samplers and linear algebra.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` literal or intermediate into `Self`.
    fn lit(x: f64) -> Self;

    /// Widens `self` to `f64`.
    fn f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    /// Absolute value, spelled out to avoid the `Signed` / `ComplexField` overlap.
    fn magnitude(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn is_finite_real(self) -> bool {
        self.f64().is_finite()
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

/// Logistic (expit) function.
#[inline]
pub fn expit<T: Real>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

/// Multivariate log-gamma `ln Γ_p(a)`.
pub fn ln_mvgamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    let mut acc = pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 0..p {
        acc += statrs::function::gamma::ln_gamma(a - j as f64 / 2.0);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_is_symmetric_and_stable() {
        assert_eq!(expit(0.0_f64), 0.5);
        assert!((expit(3.0_f64) + expit(-3.0_f64) - 1.0).abs() < 1e-15);
        assert!(expit(-800.0_f64) >= 0.0);
        assert_eq!(expit(800.0_f64), 1.0);
        assert!((expit(1.0_f32) - 0.731_058_6).abs() < 1e-6);
    }

    #[test]
    fn ln_norm_cdf_is_continuous_across_branch() {
        let a = ln_norm_cdf(-29.999_999);
        let b = ln_norm_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        assert!((ln_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn mvgamma_reduces_to_lgamma() {
        let a = 3.7;
        assert!((ln_mvgamma(1, a) - statrs::function::gamma::ln_gamma(a)).abs() < 1e-12);
    }
}
