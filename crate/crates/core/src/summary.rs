//! Sample summaries: quantiles, equal-tailed intervals, means.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lower: T,
    pub upper: T,
}

/// Point estimate plus equal-tailed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<T> {
    pub mean: T,
    pub lower: T,
    pub upper: T,
}

pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    xs.iter().fold(T::zero(), |a, &v| a + v) / T::of_usize(xs.len())
}

/// Population variance (divisor `n`).
pub fn variance<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let m = mean(xs);
    xs.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m)) / T::of_usize(xs.len())
}

/// Linear-interpolation quantile of already sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted<T: Real>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = T::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * w
}

fn sorted_copy<T: Real>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v
}

pub fn quantile<T: Real>(xs: &[T], q: f64) -> T {
    quantile_sorted(&sorted_copy(xs), q)
}

/// Central interval with coverage `level`.
pub fn interval<T: Real>(xs: &[T], level: f64) -> Interval<T> {
    let s = sorted_copy(xs);
    let tail = 0.5 * (1.0 - level);
    Interval {
        lower: quantile_sorted(&s, tail),
        upper: quantile_sorted(&s, 1.0 - tail),
    }
}

pub fn summarize<T: Real>(xs: &[T], level: f64) -> Summary<T> {
    let iv = interval(xs, level);
    Summary {
        mean: mean(xs),
        lower: iv.lower,
        upper: iv.upper,
    }
}
