//! Inverse-Wishart draws via the Bartlett decomposition.
//!
//! `IW_std(df, Ψ)` has `E = Ψ/(df − p − 1)`. The shape-`ν` form used by the
//! model corresponds to `df = ν + p − 1`, with mean `Ψ/(ν − 2)`.

use nalgebra::DMatrix;
use rand::Rng;

use super::{sample_chisq, std_normal};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, ln_det, symmetrize, trace_of_product, Chol};
use crate::scalar::{ln_mvgamma, Real};

/// `IW_std(df, Ψ)` given the Cholesky factor of `Ψ`.
pub fn sample_invwishart_std<T: Real, R: Rng + ?Sized>(df: T, scale: &Chol<T>, rng: &mut R) -> Result<DMatrix<T>> {
    let u = scale.l();
    let p = u.nrows();
    let df = df.f64();
    if df <= (p as f64) - 1.0 {
        return Err(Error::InvalidParameter(format!("inverse-Wishart df {df} too small for dimension {p}")));
    }
    // Bartlett factor of W(df, I).
    let mut a = DMatrix::<T>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = T::lit(sample_chisq(df - i as f64, rng).sqrt());
        for j in 0..i {
            a[(i, j)] = T::lit(std_normal(rng));
        }
    }
    // Σ = G Gᵀ with Gᵀ = A⁻¹ Uᵀ.
    let mut gt = u.transpose();
    if !a.solve_lower_triangular_mut(&mut gt) {
        return Err(Error::NotPositiveDefinite("Bartlett factor".into()));
    }
    let mut s = gt.transpose() * gt;
    symmetrize(&mut s);
    Ok(s)
}

/// Shape-`ν` inverse-Wishart: standard df `ν + p − 1`, mean `Ψ/(ν − 2)`.
pub fn sample_invwishart_dawid<T: Real, R: Rng + ?Sized>(nu: T, scale: &DMatrix<T>, rng: &mut R) -> Result<DMatrix<T>> {
    if !(nu > T::lit(2.0)) {
        return Err(Error::InvalidParameter(format!("inverse-Wishart shape must exceed 2, got {nu}")));
    }
    let p = scale.nrows();
    let chol = cholesky_spd(scale.clone(), "inverse-Wishart scale")?;
    sample_invwishart_std(nu + T::of_usize(p) - T::one(), &chol, rng)
}

/// Log-density of `IW_std(df, Ψ)` at `Σ`, given factors of both.
pub fn invwishart_logpdf<T: Real>(df: f64, scale: &Chol<T>, scale_matrix: &DMatrix<T>, sigma: &Chol<T>) -> f64 {
    let p = scale_matrix.nrows();
    let pf = p as f64;
    let sigma_inv = sigma.inverse();
    0.5 * df * ln_det(scale).f64()
        - 0.5 * df * pf * std::f64::consts::LN_2
        - ln_mvgamma(p, 0.5 * df)
        - 0.5 * (df + pf + 1.0) * ln_det(sigma).f64()
        - 0.5 * trace_of_product(scale_matrix, &sigma_inv).f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randdist::chain_rng;

    #[test]
    fn dawid_mean_three_dim() {
        let mut rng = chain_rng(31);
        let psi = DMatrix::<f64>::identity(3, 3) * 8.0;
        let n = 100_000;
        let mut acc = DMatrix::zeros(3, 3);
        for _ in 0..n {
            acc += sample_invwishart_dawid(10.0, &psi, &mut rng).unwrap();
        }
        acc /= n as f64;
        let eye = DMatrix::identity(3, 3);
        let rel = (&acc - &eye).norm() / eye.norm();
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn scalar_reduction_is_inverse_gamma() {
        // p = 1: IW_dawid(ν, ψ) = IG(ν/2, ψ/2) with mean ψ/(ν−2).
        let mut rng = chain_rng(32);
        let psi = DMatrix::from_element(1, 1, 3.0);
        let xs: Vec<f64> = (0..300_000)
            .map(|_| sample_invwishart_dawid(9.0, &psi, &mut rng).unwrap()[(0, 0)])
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        let (a, b) = (4.5, 1.5);
        assert!((m / (b / (a - 1.0)) - 1.0).abs() < 0.01, "{m}");
        let want_v = b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0));
        assert!((v / want_v - 1.0).abs() < 0.05, "{v} vs {want_v}");
    }

    #[test]
    fn draws_are_spd() {
        let mut rng = chain_rng(33);
        let g: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let psi = crate::kernels::covariance_matrix(&g, &g, &crate::kernels::MaternParams::new(1.0, 3.0).unwrap());
        for _ in 0..50 {
            let s = sample_invwishart_dawid(5.0, &psi, &mut rng).unwrap();
            assert!(nalgebra::Cholesky::new(s).is_some());
        }
    }

    #[test]
    fn shape_at_most_two_is_rejected() {
        let mut rng = chain_rng(34);
        assert!(sample_invwishart_dawid(2.0, &DMatrix::<f64>::identity(2, 2), &mut rng).is_err());
    }

    #[test]
    fn logpdf_matches_inverse_gamma_in_one_dim() {
        let df = 7.0;
        let psi = DMatrix::from_element(1, 1, 2.0);
        let x: f64 = 0.4;
        let sig = DMatrix::from_element(1, 1, x);
        let lp = invwishart_logpdf(df, &cholesky_spd(psi.clone(), "").unwrap(), &psi, &cholesky_spd(sig, "").unwrap());
        let (a, b) = (df / 2.0, 1.0);
        let want = a * f64::ln(b) - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x;
        assert!((lp - want).abs() < 1e-12, "{lp} vs {want}");
    }
}
