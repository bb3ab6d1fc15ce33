//! Matérn covariance (smoothness fixed at 5/2) for the inverse-Wishart
//! process scale function, and the practical-range summary.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::summary::{interval, Interval};

/// Kernel correlation level that defines the practical range.
pub const PRACTICAL_RANGE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams<T> {
    pub sigma2: T,
    pub rho: T,
}

impl<T: Real> MaternParams<T> {
    pub fn new(sigma2: T, rho: T) -> Result<Self> {
        if !(sigma2 > T::zero() && rho > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "Matérn parameters need sigma2 > 0 and rho > 0 (got {sigma2}, {rho})"
            )));
        }
        Ok(Self { sigma2, rho })
    }
}

/// Matérn-5/2 correlation at scaled distance `r = d / rho`.
#[inline]
pub fn matern52_correlation<T: Real>(r: T) -> T {
    let s5 = T::lit(5.0_f64.sqrt());
    let a = s5 * r;
    (T::one() + a + T::lit(5.0 / 3.0) * r * r) * (-a).exp()
}

/// `σ² (1 + √5 d/ρ + 5d²/(3ρ²)) exp(−√5 d/ρ)`.
pub fn matern52<T: Real>(d: T, p: &MaternParams<T>) -> Result<T> {
    if d < T::zero() || !d.is_finite_real() {
        return Err(Error::InvalidParameter(format!(
            "kernel distance must be finite and nonnegative, got {d}"
        )));
    }
    Ok(p.sigma2 * matern52_correlation(d / p.rho))
}

/// Cross-covariance matrix `Ψ(a, b)` between two sets of time points.
pub fn covariance_matrix<T: Real>(a: &[T], b: &[T], p: &MaternParams<T>) -> DMatrix<T> {
    let mut m = DMatrix::from_fn(a.len(), b.len(), |i, j| {
        p.sigma2 * matern52_correlation((a[i] - b[j]).magnitude() / p.rho)
    });
    if std::ptr::eq(a, b) {
        crate::linalg::symmetrize(&mut m);
    }
    m
}

/// Correlation matrix `Ψ/σ²` on one set of points.
pub fn correlation_matrix<T: Real>(times: &[T], rho: T) -> DMatrix<T> {
    let n = times.len();
    let mut m = DMatrix::from_element(n, n, T::one());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = matern52_correlation((times[i] - times[j]).magnitude() / rho);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Scaled distance `d/ρ` at which the Matérn-5/2 correlation equals `level`,
/// found by bracketed bisection on the monotone correlation.
pub fn unit_range(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0);
    let corr = |r: f64| matern52_correlation(r);
    let mut hi = 1.0;
    while corr(hi) > level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if corr(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeSummary<T> {
    /// Practical range per draw.
    pub per_draw: Vec<T>,
    pub mean: T,
    pub interval: Interval<T>,
}

/// Practical range (distance where the correlation falls to 0.05) per
/// posterior draw of `rho`, with mean and central 95% interval.
///
/// The correlation depends on `d` only through `d/ρ`, so each draw's root is
/// the unit root scaled by that draw's range.
pub fn practical_range<T: Real>(rho_draws: &[T]) -> Result<RangeSummary<T>> {
    if rho_draws.is_empty() {
        return Err(Error::InvalidParameter("practical range needs at least one draw".into()));
    }
    let unit = T::lit(unit_range(PRACTICAL_RANGE_LEVEL));
    let per_draw: Vec<T> = rho_draws.iter().map(|&r| r * unit).collect();
    let mean = per_draw.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(per_draw.len());
    let interval = interval(&per_draw, 0.95);
    Ok(RangeSummary {
        per_draw,
        mean,
        interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(s: f64, r: f64) -> MaternParams<f64> {
        MaternParams::new(s, r).unwrap()
    }

    #[test]
    fn origin_equals_scale() {
        assert_eq!(matern52(0.0, &p(2.7, 0.3)).unwrap(), 2.7);
    }

    #[test]
    fn direct_formula_value() {
        let v = matern52(1.0, &p(2.0, 5.0_f64.sqrt())).unwrap();
        assert_relative_eq!(v, 2.0 * (1.0 + 1.0 + 1.0 / 3.0) * (-1.0_f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn far_tail_underflows() {
        assert!(matern52(1000.0, &p(1.0, 1.0)).unwrap() < 1e-300);
    }

    #[test]
    fn negative_distance_is_error() {
        assert!(matern52(-0.1, &p(1.0, 1.0)).is_err());
    }

    #[test]
    fn matrices() {
        let m = covariance_matrix(&[0.0], &[0.0], &p(3.0, 1.0));
        assert_eq!(m[(0, 0)], 3.0);
        let g = [0.0, 1.0, 2.0];
        let m = covariance_matrix(&g, &g, &p(1.0, 1.3));
        assert_eq!(m.diagonal().iter().copied().collect::<Vec<_>>(), vec![1.0; 3]);
        assert_eq!(m.transpose(), m);
        let m = covariance_matrix(&[0.0, 1.0], &[0.5], &p(1.0, 1.0));
        let want = matern52(0.5, &p(1.0, 1.0)).unwrap();
        assert_eq!(m.shape(), (2, 1));
        assert_eq!(m[(0, 0)], want);
        assert_eq!(m[(1, 0)], want);
    }

    #[test]
    fn smooth_at_origin() {
        // Central second difference of the correlation converges as h -> 0.
        let second = |h: f64| (matern52_correlation(h) - 2.0 + matern52_correlation(h)) / (h * h);
        let a = second(1e-3);
        let b = second(1e-4);
        assert!(a.is_finite() && b.is_finite());
        assert_relative_eq!(a, -5.0 / 3.0, epsilon = 1e-2);
        assert_relative_eq!(a, b, epsilon = 1e-2);
    }

    #[test]
    fn practical_range_matches_bisection_oracle() {
        // Independent bisection on the raw formula with rho = 1.
        let f = |d: f64| (1.0 + 5f64.sqrt() * d + 5.0 * d * d / 3.0) * (-(5f64.sqrt()) * d).exp() - 0.05;
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let s = practical_range(&[1.0]).unwrap();
        assert_relative_eq!(s.per_draw[0], 0.5 * (lo + hi), epsilon = 1e-12);
        assert_relative_eq!(matern52_correlation(s.per_draw[0]), 0.05, epsilon = 1e-12);
    }

    #[test]
    fn practical_range_scaling_and_width() {
        let s = practical_range(&[2.0, 2.0]).unwrap();
        assert_eq!(s.interval.lower, s.interval.upper);
        let a = practical_range(&[1.5]).unwrap().per_draw[0];
        let b = practical_range(&[3.0]).unwrap().per_draw[0];
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn grid_matrix_is_positive_definite() {
        let g: Vec<f64> = (0..40).map(|v| v as f64 * 0.7).collect();
        let m = covariance_matrix(&g, &g, &p(1.5, 2.0));
        assert!(nalgebra::Cholesky::new(m).is_some());
    }

    #[test]
    fn works_in_single_precision() {
        let v = matern52(1.0_f32, &MaternParams::new(2.0_f32, 5.0_f32.sqrt()).unwrap()).unwrap();
        assert!((v - 2.0 * (7.0 / 3.0) * (-1.0_f32).exp()).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn correlation_depends_on_d_over_rho(d in 0.0..50.0f64, rho in 0.1..20.0f64, k in 0.1..10.0f64) {
                let a = matern52(d, &p(1.0, rho)).unwrap();
                let b = matern52(d * k, &p(1.0, rho * k)).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300) + 1e-300);
            }

            #[test]
            fn nonincreasing_and_bounded(d in 0.0..30.0f64, e in 0.0..5.0f64, s in 0.1..5.0f64, rho in 0.1..10.0f64) {
                let q = p(s, rho);
                let a = matern52(d, &q).unwrap();
                let b = matern52(d + e, &q).unwrap();
                prop_assert!(a <= s && a >= 0.0);
                prop_assert!(b <= a + 1e-15);
            }
        }
    }
}
