//! Dense linear-algebra helpers built on `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative diagonal jitter added on the single Cholesky retry.
pub const JITTER: f64 = 1e-8;

pub type Chol<T> = Cholesky<T, Dyn>;

/// Cholesky with the crate's jitter policy: on failure add `JITTER * scale`
/// to the diagonal, retry once, then give up.
pub fn cholesky_with_jitter<T: Real>(m: DMatrix<T>, scale: T, context: &str) -> Result<Chol<T>> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite_real()) {
        return Err(Error::NotPositiveDefinite(format!("{context}: non-finite entry")));
    }
    let retry = m.clone();
    if let Some(c) = Cholesky::new(m) {
        return Ok(c);
    }
    let mut jittered = retry;
    let add = T::lit(JITTER) * scale;
    for i in 0..jittered.nrows() {
        jittered[(i, i)] += add;
    }
    Cholesky::new(jittered).ok_or_else(|| Error::NotPositiveDefinite(context.to_string()))
}

/// Cholesky of a generic SPD matrix; the jitter scale is its mean diagonal.
pub fn cholesky_spd<T: Real>(m: DMatrix<T>, context: &str) -> Result<Chol<T>> {
    let n = m.nrows().max(1);
    let scale = m.diagonal().iter().fold(T::zero(), |a, &d| a + d.magnitude()) / T::of_usize(n);
    cholesky_with_jitter(m, scale, context)
}

/// `ln |A|` from a Cholesky factor.
pub fn ln_det<T: Real>(chol: &Chol<T>) -> T {
    let l = chol.l_dirty();
    let half = (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln());
    half + half
}

/// `tr(A B)` for symmetric `A`, `B`.
pub fn trace_of_product<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Averages `m` with its transpose in place.
pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Quadratic form `xᵀ A⁻¹ x` using a Cholesky factor of `A`.
pub fn inv_quad_form<T: Real>(chol: &Chol<T>, x: &DVector<T>) -> T {
    let mut y = x.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    y.dot(&y)
}

/// `L x` for the lower factor of `chol`; maps standard normals to `N(0, A)`.
pub fn lower_mul<T: Real>(chol: &Chol<T>, x: &DVector<T>) -> DVector<T> {
    let l = chol.l_dirty();
    let n = x.len();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..=i {
            acc += l[(i, j)] * x[j];
        }
        out[i] = acc;
    }
    out
}

/// `L⁻ᵀ x`; maps standard normals to `N(0, A⁻¹)` when `chol` factors a precision.
pub fn lower_transpose_solve<T: Real>(chol: &Chol<T>, x: &DVector<T>) -> DVector<T> {
    let mut y = x.clone();
    chol.l_dirty().tr_solve_lower_triangular_mut(&mut y);
    y
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrtm_psd<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(m.clone());
    let vals = eig.eigenvalues.map(|v| if v > T::zero() { v.sqrt() } else { T::zero() });
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&vals) * q.transpose()
}

/// Extracts rows `rows` and columns `cols` of `m`.
pub fn submatrix<T: Real>(m: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector<T: Real>(v: &DVector<T>, idx: &[usize]) -> DVector<T> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn jitter_rescues_semidefinite_matrix() {
        // Rank one: plain Cholesky fails, jittered succeeds.
        let m = DMatrix::from_element(3, 3, 1.0_f64);
        assert!(Cholesky::new(m.clone()).is_none());
        let c = cholesky_with_jitter(m, 1.0, "rank one").unwrap();
        assert!(ln_det(&c).is_finite());
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0_f64, 2.0, 2.0, 1.0]);
        let err = cholesky_with_jitter(m, 1.0, "indefinite").unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite(_)));
    }

    #[test]
    fn quad_form_and_log_det() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0_f64, 1.0, 1.0, 3.0]);
        let c = cholesky_spd(a.clone(), "a").unwrap();
        assert_relative_eq!(ln_det(&c), 11.0_f64.ln(), epsilon = 1e-12);
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let direct = (x.transpose() * a.try_inverse().unwrap() * &x)[(0, 0)];
        assert_relative_eq!(inv_quad_form(&c, &x), direct, epsilon = 1e-12);
    }

    #[test]
    fn sqrtm_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0_f64, 0.5, 0.5, 1.0]);
        let r = sqrtm_psd(&a);
        assert_relative_eq!(&r * &r, a, epsilon = 1e-12);
    }
}
