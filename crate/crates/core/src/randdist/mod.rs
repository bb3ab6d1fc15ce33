//! Random-variate generators and densities used by the sampler.
//!
//! Every generator takes an explicit `&mut R where R: Rng`; nothing draws from
//! ambient entropy. Chains use [`ChainRng`] and derive independent substreams
//! with [`substream`].

mod mvn;
mod mvt;
mod pg;
mod wishart;

pub use mvn::{sample_mvn, sample_mvn_chol, sample_mvn_precision, standard_normal_vector};
pub use mvt::{mvt_conditional, mvt_logpdf, sample_mvt, MvtParams};
pub use pg::{pg1_mean, sample_pg1};
pub use wishart::{invwishart_logpdf, sample_invwishart_dawid, sample_invwishart_std};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Generator used for all chains.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// Independent stream `stream` under `key`. Streams with different indices
/// never overlap, so per-subject work can run on any thread.
pub fn substream(key: u64, stream: u64) -> ChainRng {
    let mut r = ChainRng::seed_from_u64(key);
    r.set_stream(stream);
    r
}

/// Mixes a base seed with a tag; tag 0 returns the base seed unchanged.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    if tag == 0 {
        return base;
    }
    // SplitMix64 finalizer.
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

#[inline]
pub fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Uniform on the open interval (0, 1).
#[inline]
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `Gamma(shape, rate)`.
pub fn sample_gamma<T: Real, R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R) -> Result<T> {
    let (a, b) = (shape.f64(), rate.f64());
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("Gamma({a}, {b})")));
    }
    let g = Gamma::new(a, 1.0 / b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(T::lit(g.sample(rng)))
}

/// `IG(shape, scale)`, the reciprocal of `Gamma(shape, rate = scale)`.
pub fn sample_invgamma<T: Real, R: Rng + ?Sized>(shape: T, scale: T, rng: &mut R) -> Result<T> {
    let g = sample_gamma(shape, scale, rng)?;
    Ok(T::one() / g)
}

pub fn sample_uniform<T: Real, R: Rng + ?Sized>(lo: T, hi: T, rng: &mut R) -> Result<T> {
    if !(lo < hi) || !lo.is_finite_real() || !hi.is_finite_real() {
        return Err(Error::InvalidParameter(format!("Unif({lo}, {hi})")));
    }
    let u = open_unit(rng);
    Ok(lo + (hi - lo) * T::lit(u))
}

pub fn sample_normal<T: Real, R: Rng + ?Sized>(mean: T, var: T, rng: &mut R) -> T {
    mean + var.sqrt() * T::lit(std_normal(rng))
}

/// `χ²_k` draw.
pub fn sample_chisq<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    Gamma::new(0.5 * k, 2.0).expect("positive df").sample(rng)
}

/// Draws an index with probability proportional to `exp(logw)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(logw: &[f64], rng: &mut R) -> Result<usize> {
    let probs = normalize_log_weights(logw)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}

/// Log-sum-exp normalization of log-weights into probabilities.
pub fn normalize_log_weights(logw: &[f64]) -> Result<Vec<f64>> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateGriddyWeights);
    }
    let w: Vec<f64> = logw.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn gamma_moments() {
        let mut rng = chain_rng(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_gamma(2.0, 2.0, &mut rng).unwrap()).collect();
        let (m, v) = moments(&xs);
        assert!((m - 1.0).abs() < 0.02, "{m}");
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn invgamma_mean() {
        let mut rng = chain_rng(2);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_invgamma(5.0, 0.001, &mut rng).unwrap()).collect();
        let (m, _) = moments(&xs);
        assert!((m / 0.00025 - 1.0).abs() < 0.01, "{m}");
    }

    #[test]
    fn uniform_support() {
        let mut rng = chain_rng(3);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_uniform(3.0, 12.0, &mut rng).unwrap()).collect();
        assert!(xs.iter().all(|&x| x > 3.0 && x < 12.0));
    }

    #[test]
    fn invalid_parameters_are_errors() {
        let mut rng = chain_rng(4);
        assert!(sample_gamma(0.0, 1.0, &mut rng).is_err());
        assert!(sample_invgamma(1.0, -1.0, &mut rng).is_err());
        assert!(sample_uniform(2.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn log_weights_are_shift_invariant() {
        let a = normalize_log_weights(&[0.0, 1.0, -2.0]).unwrap();
        let b = normalize_log_weights(&[1000.0, 1001.0, 998.0]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(matches!(
            normalize_log_weights(&[f64::NEG_INFINITY; 2]),
            Err(Error::DegenerateGriddyWeights)
        ));
    }

    #[test]
    fn substreams_are_distinct_and_reproducible() {
        let a: u64 = substream(9, 0).random();
        let b: u64 = substream(9, 1).random();
        let c: u64 = substream(9, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_eq!(derive_seed(42, 0), 42);
        assert_ne!(derive_seed(42, 1), 42);
    }
}
