//! Exact `PG(1, c)` sampler: Devroye's alternating-series rejection method
//! with a truncated exponential / truncated inverse-Gaussian proposal.

use std::f64::consts::PI;

use rand::Rng;

use super::{open_unit, std_exp, std_normal};
use crate::scalar::{ln_norm_cdf, Real};

const TRUNC: f64 = 0.64;

/// `E[PG(1, c)] = tanh(c/2) / (2c)`, with limit 1/4 at 0.
pub fn pg1_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Coefficient `a_n(x)` of the series representation of the `J*(1, 0)` density.
#[inline]
fn coef(n: usize, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        PI * k * (2.0 / (PI * x)).powf(1.5) * (-2.0 * k * k / x).exp()
    }
}

/// Inverse-Gaussian `IG(1/z, 1)` truncated to `(0, TRUNC)`.
fn truncated_inv_gauss<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let t = TRUNC;
    if z < 1.0 / t {
        // Mean above the truncation point: scaled inverse chi-square proposal.
        loop {
            let e1 = loop {
                let e1 = std_exp(rng);
                let e2 = std_exp(rng);
                if e1 * e1 <= 2.0 * e2 / t {
                    break e1;
                }
            };
            let x = t / ((1.0 + t * e1) * (1.0 + t * e1));
            let alpha = (-0.5 * z * z * x).exp();
            if open_unit(rng) <= alpha {
                return x;
            }
        }
    } else {
        let mu = 1.0 / z;
        loop {
            let y = std_normal(rng);
            let y = y * y;
            let muy = mu * y;
            let mut x = mu + 0.5 * mu * muy - 0.5 * mu * (4.0 * muy + muy * muy).sqrt();
            if open_unit(rng) > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x < t {
                return x;
            }
        }
    }
}

/// Log of the mass the proposal puts on `(0, TRUNC)` relative to the
/// exponential tail, `ln(2 e^{-z} F_IG(TRUNC; 1/z, 1))`.
fn ln_left_mass(z: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let l1 = -z + ln_norm_cdf(b);
    let l2 = z + ln_norm_cdf(a);
    let m = l1.max(l2);
    std::f64::consts::LN_2 + m + ((l1 - m).exp() + (l2 - m).exp()).ln()
}

/// Draws from `PG(1, c)`.
pub fn sample_pg1<T: Real, R: Rng + ?Sized>(c: T, rng: &mut R) -> T {
    T::lit(sample_pg1_f64(c.f64(), rng))
}

fn sample_pg1_f64<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    let z = 0.5 * c.abs();
    let t = TRUNC;
    let k = PI * PI / 8.0 + 0.5 * z * z;
    let ln_p = (PI / (2.0 * k)).ln() - k * t;
    let ln_q = ln_left_mass(z);
    let right_prob = 1.0 / (1.0 + (ln_q - ln_p).exp());
    loop {
        let x = if open_unit(rng) < right_prob {
            t + std_exp(rng) / k
        } else {
            truncated_inv_gauss(z, rng)
        };
        let mut s = coef(0, x);
        let y = open_unit(rng) * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}
