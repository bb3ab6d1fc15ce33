//! Scoring and checking: signal RMSE, posterior predictive loss, CRPS,
//! binary correlations, Gaussian 2-Wasserstein distance, effective sample
//! size and noise-prior elicitation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::BinaryDataset;
use crate::error::{Error, Result};
use crate::linalg::{sqrtm_psd, symmetrize};
use crate::predict::{signal_on_fine_grid, FineGrid};
use crate::randdist::{std_normal, substream};
use crate::scalar::{expit, norm_cdf, Real};
use crate::state::{PosteriorDraws, SCALAR_NAMES};
use crate::summary::{interval, mean};

/// Per-draw `sqrt( (1/n) Σᵢ (1/|τ⁺|) Σ_τ (Ẑᵢ(τ) − fᵢ(τ))² )`, with
/// `estimates[s][i][k]` and `truth[i][k]`.
pub fn rmse_signal(estimates: &[Vec<Vec<f64>>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    estimates
        .iter()
        .map(|draw| {
            if draw.len() != truth.len() {
                return Err(Error::DimensionMismatch("subjects in estimate vs truth".into()));
            }
            let mut acc = 0.0;
            for (z, f) in draw.iter().zip(truth) {
                if z.len() != f.len() || z.is_empty() {
                    return Err(Error::DimensionMismatch("grid length in estimate vs truth".into()));
                }
                acc += z.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / z.len() as f64;
            }
            Ok((acc / truth.len() as f64).sqrt())
        })
        .collect()
}

/// Every subject's signal on `τ⁺` for every draw, `[s][i][k]`.
pub fn fine_grid_signals<T: Real>(draws: &PosteriorDraws<T>, fine: &FineGrid<T>, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..draws.n_draws())
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, s as u64);
            (0..draws.n_subjects())
                .map(|i| Ok(signal_on_fine_grid(draws, s, Some(i), fine, &mut rng)?.iter().map(|v| v.f64()).collect()))
                .collect()
        })
        .collect()
}

/// Posterior predictive replicates of every observed response,
/// `[observation][replicate]` in dataset order. Replicate `r` uses draw
/// `r mod S`.
pub fn predictive_replicates<T: Real>(
    draws: &PosteriorDraws<T>,
    ds: &BinaryDataset<T>,
    replicates: usize,
    seed: u64,
) -> Result<Vec<Vec<u8>>> {
    if draws.n_draws() == 0 || replicates == 0 {
        return Err(Error::InvalidParameter("need at least one draw and one replicate".into()));
    }
    let obs = observed_positions(draws, ds)?;
    let s_count = draws.n_draws();
    let cols: Vec<Vec<u8>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let s = r % s_count;
            let mut rng = substream(seed, r as u64);
            let sd = draws.noise_var()[s].f64().sqrt();
            obs.iter()
                .map(|&(i, k)| {
                    let z = draws.signal_at(s, i, k).f64() + sd * std_normal(&mut rng);
                    u8::from(rng.random::<f64>() < expit(z))
                })
                .collect()
        })
        .collect();
    Ok((0..obs.len()).map(|o| cols.iter().map(|c| c[o]).collect()).collect())
}

/// `(draw subject index, pooled position)` of each observation of `ds`.
fn observed_positions<T: Real>(draws: &PosteriorDraws<T>, ds: &BinaryDataset<T>) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(ds.n_observations());
    for s in ds.subjects() {
        let i = draws.subject_index(&s.id).ok_or_else(|| Error::UnknownSubject(s.id.clone()))?;
        for &t in s.grid.times() {
            let k = draws
                .pooled()
                .times()
                .iter()
                .position(|&x| x == t)
                .ok_or_else(|| Error::DimensionMismatch(format!("time {t} of subject {} not in the fitted grid", s.id)))?;
            out.push((i, k));
        }
    }
    Ok(out)
}

/// Observed responses of `ds` in dataset order.
pub fn observed_responses<T: Real>(ds: &BinaryDataset<T>) -> Vec<u8> {
    ds.subjects().iter().flat_map(|s| s.responses.iter().copied()).collect()
}

/// Goodness of fit, penalty and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveLoss {
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub total: f64,
}

/// `G = Σ (y − ȳ_rep)²`, `P = Σ Var(y_rep)` (population variance).
pub fn predictive_loss_from_replicates(y: &[u8], reps: &[Vec<u8>]) -> Result<PredictiveLoss> {
    if y.len() != reps.len() {
        return Err(Error::DimensionMismatch("responses vs replicate rows".into()));
    }
    let (mut g, mut p) = (0.0, 0.0);
    for (&yo, r) in y.iter().zip(reps) {
        if r.is_empty() {
            return Err(Error::InvalidParameter("observation without replicates".into()));
        }
        let m = r.iter().map(|&v| v as f64).sum::<f64>() / r.len() as f64;
        g += (yo as f64 - m).powi(2);
        p += m - m * m;
    }
    Ok(PredictiveLoss { g, p, total: g + p })
}

/// Empirical CRPS `E|X − y| − ½E|X − X′|` of one observation.
pub fn crps_empirical(samples: &[f64], y: f64) -> f64 {
    let n = samples.len() as f64;
    let mut x = samples.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let e1 = x.iter().map(|v| (v - y).abs()).sum::<f64>() / n;
    // Σ_{i,j} |x_i − x_j| = 2 Σ_i (2i − n − 1) x_(i) over sorted values.
    let pair: f64 = x.iter().enumerate().map(|(i, v)| (2.0 * (i as f64 + 1.0) - n - 1.0) * v).sum::<f64>() * 2.0;
    e1 - 0.5 * pair / (n * n)
}

/// Mean CRPS over observations from replicate rows.
pub fn crps_from_replicates(y: &[u8], reps: &[Vec<u8>]) -> Result<f64> {
    if y.len() != reps.len() || y.is_empty() {
        return Err(Error::DimensionMismatch("responses vs replicate rows".into()));
    }
    let total: f64 = y
        .iter()
        .zip(reps)
        .map(|(&yo, r)| {
            let xs: Vec<f64> = r.iter().map(|&v| v as f64).collect();
            crps_empirical(&xs, yo as f64)
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// `G`, `P`, `G + P` and mean CRPS of a fit on its data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub total: f64,
    pub crps: f64,
    pub replicates: usize,
    pub observations: usize,
}

pub fn posterior_predictive_loss<T: Real>(
    draws: &PosteriorDraws<T>,
    ds: &BinaryDataset<T>,
    replicates: usize,
    seed: u64,
) -> Result<PredictiveLoss> {
    let reps = predictive_replicates(draws, ds, replicates, seed)?;
    predictive_loss_from_replicates(&observed_responses(ds), &reps)
}

pub fn crps_binary<T: Real>(draws: &PosteriorDraws<T>, ds: &BinaryDataset<T>, replicates: usize, seed: u64) -> Result<f64> {
    let reps = predictive_replicates(draws, ds, replicates, seed)?;
    crps_from_replicates(&observed_responses(ds), &reps)
}

/// Both scores from one set of replicates.
pub fn score<T: Real>(draws: &PosteriorDraws<T>, ds: &BinaryDataset<T>, replicates: usize, seed: u64) -> Result<ScoreReport> {
    let reps = predictive_replicates(draws, ds, replicates, seed)?;
    let y = observed_responses(ds);
    let l = predictive_loss_from_replicates(&y, &reps)?;
    Ok(ScoreReport {
        g: l.g,
        p: l.p,
        total: l.total,
        crps: crps_from_replicates(&y, &reps)?,
        replicates,
        observations: y.len(),
    })
}

/// Product-moment correlation; `None` when either sequence is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Counts `[[n00, n01], [n10, n11]]` of paired binary outcomes.
pub fn pair_table(x: &[u8], y: &[u8]) -> [[usize; 2]; 2] {
    let mut t = [[0; 2]; 2];
    for (&a, &b) in x.iter().zip(y) {
        t[a as usize][b as usize] += 1;
    }
    t
}

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn bvn_density(h: f64, k: f64, r: f64) -> f64 {
    let s = 1.0 - r * r;
    (-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s.sqrt())
}

/// `P(X ≤ h, Y ≤ k)` for a standard bivariate normal with correlation `r`,
/// as `Φ(h)Φ(k) + ∫₀ʳ φ₂(h, k; s) ds`.
pub fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    const PANELS: usize = 8;
    let (x, w) = gauss_legendre(20);
    let mut acc = 0.0;
    for p in 0..PANELS {
        let a = r * p as f64 / PANELS as f64;
        let b = r * (p + 1) as f64 / PANELS as f64;
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        acc += half * x.iter().zip(&w).map(|(xi, wi)| wi * bvn_density(h, k, mid + half * xi)).sum::<f64>();
    }
    (norm_cdf(h) * norm_cdf(k) + acc).clamp(0.0, 1.0)
}

fn probit(p: f64) -> f64 {
    use statrs::distribution::Normal;
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Tetrachoric correlation of a 2×2 table. With both thresholds at their
/// marginal probits the bivariate-normal likelihood is saturated, so the
/// estimate solves `Φ₂(h, k; ρ) = n00/N`, started from the cosine-odds-ratio
/// approximation and refined by Newton steps kept inside a bisection
/// bracket. `None` when a margin is empty.
pub fn tetrachoric(t: [[usize; 2]; 2]) -> Option<f64> {
    const BOUND: f64 = 0.9999;
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    let row0 = (t[0][0] + t[0][1]) as f64 / n;
    let col0 = (t[0][0] + t[1][0]) as f64 / n;
    if n == 0.0 || row0 <= 0.0 || row0 >= 1.0 || col0 <= 0.0 || col0 >= 1.0 {
        return None;
    }
    let (h, k) = (probit(row0), probit(col0));
    let target = t[0][0] as f64 / n;
    let f = |r: f64| bvn_cdf(h, k, r) - target;
    let (mut lo, mut hi) = (-BOUND, BOUND);
    if f(lo) >= 0.0 {
        return Some(lo);
    }
    if f(hi) <= 0.0 {
        return Some(hi);
    }
    let (a, b, c, d) = (t[0][0] as f64 + 0.5, t[0][1] as f64 + 0.5, t[1][0] as f64 + 0.5, t[1][1] as f64 + 0.5);
    let or = a * d / (b * c);
    let mut r = (std::f64::consts::PI / (1.0 + or.sqrt())).cos().clamp(lo, hi);
    for _ in 0..100 {
        let v = f(r);
        if v.abs() < 1e-13 {
            break;
        }
        if v > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let step = r - v / bvn_density(h, k, r);
        r = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-13 {
            break;
        }
    }
    Some(r)
}

/// Pairwise correlation matrices of binary variables observed on shared
/// units (`columns[v][unit]`, `None` when missing). Cells with fewer than two
/// complete pairs or a constant margin are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryCorrelations {
    pub pearson: Vec<Vec<Option<f64>>>,
    pub tetrachoric: Vec<Vec<Option<f64>>>,
}

pub fn pearson_and_tetrachoric(columns: &[Vec<Option<u8>>]) -> BinaryCorrelations {
    let v = columns.len();
    let mut pe = vec![vec![None; v]; v];
    let mut te = vec![vec![None; v]; v];
    for a in 0..v {
        for b in a..v {
            let (x, y): (Vec<u8>, Vec<u8>) = columns[a]
                .iter()
                .zip(&columns[b])
                .filter_map(|(p, q)| Some(((*p)?, (*q)?)))
                .unzip();
            if x.len() < 2 {
                continue;
            }
            let xf: Vec<f64> = x.iter().map(|&u| u as f64).collect();
            let yf: Vec<f64> = y.iter().map(|&u| u as f64).collect();
            let p = pearson(&xf, &yf);
            let t = if a == b { p.map(|_| 1.0) } else { tetrachoric(pair_table(&x, &y)) };
            pe[a][b] = p;
            pe[b][a] = p;
            te[a][b] = t;
            te[b][a] = t;
        }
    }
    BinaryCorrelations {
        pearson: pe,
        tetrachoric: te,
    }
}

/// `columns[k][i]`: response of subject `i` at pooled time `k`.
pub fn columns_by_time<T: Real>(ds: &BinaryDataset<T>) -> Vec<Vec<Option<u8>>> {
    let pooled = ds.pooled();
    let mut cols = vec![vec![None; ds.n_subjects()]; pooled.len()];
    for (i, s) in ds.subjects().iter().enumerate() {
        for (t, &k) in pooled.observed(i).iter().enumerate() {
            cols[k][i] = Some(s.responses[t]);
        }
    }
    cols
}

/// 2-Wasserstein distance between `N(m_a, C_a)` and `N(m_b, C_b)`.
pub fn wasserstein2_gaussian(ma: &DVector<f64>, ca: &DMatrix<f64>, mb: &DVector<f64>, cb: &DMatrix<f64>) -> Result<f64> {
    let d = ma.len();
    if mb.len() != d || ca.shape() != (d, d) || cb.shape() != (d, d) {
        return Err(Error::DimensionMismatch("Wasserstein inputs".into()));
    }
    for (c, name) in [(ca, "first covariance"), (cb, "second covariance")] {
        if Cholesky::new(c.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(name.into()));
        }
    }
    let rb = sqrtm_psd(cb);
    let mut mid = &rb * ca * &rb;
    symmetrize(&mut mid);
    let cross = sqrtm_psd(&mid);
    let w2 = (ma - mb).norm_squared() + (ca.trace() + cb.trace() - 2.0 * cross.trace());
    Ok(w2.max(0.0).sqrt())
}


/// Effective sample size by Geyer's initial positive sequence; `None` for a
/// constant chain.
pub fn effective_sample_size(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 0.0 || !c0.is_finite() {
        return None;
    }
    let acf = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * c0);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = acf(2 * k) + acf(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        // Initial monotone sequence.
        pair = pair.min(prev);
        prev = pair;
        sum += pair;
        k += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Some(n as f64 / tau)
}

/// Trace summary of one scalar parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// `None` when the trace is constant.
    pub ess: Option<f64>,
}

/// Summaries and effective sample sizes of the scalar traces.
pub fn chain_diagnostics<T: Real>(draws: &PosteriorDraws<T>) -> Result<Vec<TraceSummary>> {
    if draws.n_draws() < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 draws, got {}", draws.n_draws())));
    }
    Ok(SCALAR_NAMES
        .iter()
        .map(|&name| {
            let x: Vec<f64> = draws.scalar(name).expect("known scalar").iter().map(|v| v.f64()).collect();
            let iv = interval(&x, 0.95);
            TraceSummary {
                name: name.to_string(),
                mean: mean(&x),
                sd: crate::summary::variance(&x).sqrt(),
                lower: iv.lower,
                upper: iv.upper,
                ess: effective_sample_size(&x),
            }
        })
        .collect())
}

/// Default coverage for the noise-prior elicitation.
pub const DEFAULT_ELICIT_COVERAGE: f64 = 0.99;

/// `IG(a_ε, b_ε)` such that the marginal Student-t error with `υ` degrees of
/// freedom puts probability `q` on `(−R, R)`: `a_ε = υ/2`,
/// `b_ε = R²υ / (2 t²)` with `t` the `1 − (1 − q)/2` quantile of `t_υ`.
pub fn elicit_noise_prior(range: f64, upsilon: f64, q: f64) -> Result<(f64, f64)> {
    if !(range > 0.0) || !(upsilon > 0.0) {
        return Err(Error::InvalidParameter("range and degrees of freedom must be positive".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("coverage must lie in (0, 1), got {q}")));
    }
    let t = StudentsT::new(0.0, 1.0, upsilon)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .inverse_cdf(1.0 - 0.5 * (1.0 - q));
    Ok((0.5 * upsilon, range * range * upsilon / (2.0 * t * t)))
}

/// Coverage `q` that makes `elicit_noise_prior(range, upsilon, q)` return
/// scale `b_eps`.
pub fn implied_coverage(range: f64, upsilon: f64, b_eps: f64) -> Result<f64> {
    if !(range > 0.0 && upsilon > 0.0 && b_eps > 0.0) {
        return Err(Error::InvalidParameter("range, degrees of freedom and scale must be positive".into()));
    }
    let t = (range * range * upsilon / (2.0 * b_eps)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, upsilon).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(1.0 - 2.0 * (1.0 - dist.cdf(t)))
}

#[cfg(test)]
mod tests;
