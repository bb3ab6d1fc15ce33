use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::std_normal;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, lower_mul, lower_transpose_solve, Chol};
use crate::scalar::Real;

pub fn standard_normal_vector<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<T> {
    DVector::from_fn(n, |_, _| T::lit(std_normal(rng)))
}

/// `N(mean, cov)` by `mean + L e`.
pub fn sample_mvn<T: Real, R: Rng + ?Sized>(mean: &DVector<T>, cov: &DMatrix<T>, rng: &mut R) -> Result<DVector<T>> {
    if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cholesky_spd(cov.clone(), "normal covariance")?;
    Ok(sample_mvn_chol(mean, &chol, rng))
}

/// `N(mean, L Lᵀ)` for a precomputed factor.
pub fn sample_mvn_chol<T: Real, R: Rng + ?Sized>(mean: &DVector<T>, chol: &Chol<T>, rng: &mut R) -> DVector<T> {
    let e = standard_normal_vector(mean.len(), rng);
    mean + lower_mul(chol, &e)
}

/// `N(Q⁻¹ b, Q⁻¹)` given the Cholesky factor of the precision `Q` and the
/// canonical vector `b`.
pub fn sample_mvn_precision<T: Real, R: Rng + ?Sized>(
    prec: &Chol<T>,
    b: &DVector<T>,
    rng: &mut R,
) -> DVector<T> {
    let mean = prec.solve(b);
    let e = standard_normal_vector(b.len(), rng);
    mean + lower_transpose_solve(prec, &e)
}
