//! Multivariate t in the covariance parameterization: `Cov(Z) = Ψ`, so the
//! scale matrix is `Ψ (ν − 2)/ν`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::{sample_chisq, standard_normal_vector};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, inv_quad_form, ln_det, lower_mul, submatrix, subvector, symmetrize};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MvtParams<T> {
    pub nu: T,
    pub mean: DVector<T>,
    pub cov: DMatrix<T>,
}

impl<T: Real> MvtParams<T> {
    pub fn new(nu: T, mean: DVector<T>, cov: DMatrix<T>) -> Result<Self> {
        if !(nu > T::lit(2.0)) {
            return Err(Error::InvalidParameter(format!("MVT needs nu > 2, got {nu}")));
        }
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "MVT mean length {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { nu, mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn mvt_logpdf<T: Real>(x: &DVector<T>, p: &MvtParams<T>) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch(format!("point length {} vs MVT dim {}", x.len(), p.dim())));
    }
    let chol = cholesky_spd(p.cov.clone(), "MVT covariance")?;
    let d = p.dim() as f64;
    let nu = p.nu.f64();
    let q = inv_quad_form(&chol, &(x - &p.mean)).f64();
    Ok(ln_gamma(0.5 * (nu + d)) - ln_gamma(0.5 * nu) - 0.5 * d * ((nu - 2.0) * std::f64::consts::PI).ln()
        - 0.5 * ln_det(&chol).f64()
        - 0.5 * (nu + d) * (q / (nu - 2.0)).ln_1p())
}

/// `μ + √((ν−2)/W) L e` with `W ∼ χ²_ν`.
pub fn sample_mvt<T: Real, R: Rng + ?Sized>(p: &MvtParams<T>, rng: &mut R) -> Result<DVector<T>> {
    let chol = cholesky_spd(p.cov.clone(), "MVT covariance")?;
    let e = standard_normal_vector(p.dim(), rng);
    let w = sample_chisq(p.nu.f64(), rng);
    let k = T::lit(((p.nu.f64() - 2.0) / w).sqrt());
    Ok(&p.mean + lower_mul(&chol, &e) * k)
}

/// Distribution of the `a` block given the `b` block equals `zb`.
pub fn mvt_conditional<T: Real>(p: &MvtParams<T>, a: &[usize], b: &[usize], zb: &DVector<T>) -> Result<MvtParams<T>> {
    if zb.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} conditioning values for {} indices", zb.len(), b.len())));
    }
    let mu_a = subvector(&p.mean, a);
    let mu_b = subvector(&p.mean, b);
    let c_aa = submatrix(&p.cov, a, a);
    if b.is_empty() {
        return MvtParams::new(p.nu, mu_a, c_aa);
    }
    let c_ab = submatrix(&p.cov, a, b);
    let c_bb = submatrix(&p.cov, b, b);
    let chol = cholesky_spd(c_bb, "MVT conditioning block")?;
    let resid = zb - mu_b;
    let alpha = chol.solve(&resid);
    let s = resid.dot(&alpha);
    let mean = mu_a + &c_ab * alpha;
    let mut schur = c_aa - &c_ab * chol.solve(&c_ab.transpose());
    symmetrize(&mut schur);
    let nb = T::of_usize(b.len());
    let two = T::lit(2.0);
    let factor = (p.nu + s - two) / (p.nu + nb - two);
    MvtParams::new(p.nu + nb, mean, schur * factor)
}
