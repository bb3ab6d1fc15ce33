//! Posterior prediction: signals on finer grids, probability response curves,
//! binary-process covariances, the delta-method approximation and the
//! posterior covariance kernel.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{covariance_matrix, MaternParams};
use crate::linalg::{cholesky_with_jitter, lower_mul};
use crate::randdist::{sample_chisq, standard_normal_vector, std_normal, substream, ChainRng, MvtParams};
use crate::scalar::{expit, Real};
use crate::state::{MeanModel, PosteriorDraws};
use crate::summary::{quantile_sorted, Summary};

/// Default inner Monte Carlo size per posterior draw.
pub const DEFAULT_MC_INNER: usize = 200;

/// `τ⁺`: the pooled grid merged with requested prediction times.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid<T> {
    times: Vec<T>,
    pooled_pos: Vec<usize>,
    extra_pos: Vec<usize>,
}

impl<T: Real> FineGrid<T> {
    pub fn new(pooled: &[T], requested: &[T]) -> Result<Self> {
        if requested.iter().any(|t| !t.is_finite_real()) {
            return Err(Error::InvalidGrid("non-finite prediction time".into()));
        }
        let mut times: Vec<T> = pooled.iter().chain(requested).copied().collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        let pos = |t: T| times.binary_search_by(|x| x.partial_cmp(&t).unwrap()).unwrap();
        let pooled_pos: Vec<usize> = pooled.iter().map(|&t| pos(t)).collect();
        let mut is_pooled = vec![false; times.len()];
        for &k in &pooled_pos {
            is_pooled[k] = true;
        }
        let extra_pos = (0..times.len()).filter(|&k| !is_pooled[k]).collect();
        Ok(Self {
            times,
            pooled_pos,
            extra_pos,
        })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Position in `τ⁺` of each pooled-grid point.
    pub fn pooled_positions(&self) -> &[usize] {
        &self.pooled_pos
    }

    /// Positions of `τ̌ = τ⁺ ∖ τ`.
    pub fn extra_positions(&self) -> &[usize] {
        &self.extra_pos
    }

    pub fn position(&self, t: T) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }
}

/// Parses `start:end:step` into the points `start + k·step` up to `end`.
/// `step` may be a decimal or a fraction `num/den`, so `0:30:1/3` yields 91
/// points computed without accumulated rounding.
pub fn parse_grid_spec(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidGrid(format!("grid spec {spec:?} is not start:end:step"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let end: f64 = parts[1].parse().map_err(|_| bad())?;
    let (num, den) = match parts[2].split_once('/') {
        Some((n, d)) => (
            n.trim().parse::<f64>().map_err(|_| bad())?,
            d.trim().parse::<f64>().map_err(|_| bad())?,
        ),
        None => (parts[2].parse::<f64>().map_err(|_| bad())?, 1.0),
    };
    if !(num > 0.0 && den > 0.0 && end >= start && start.is_finite() && end.is_finite()) {
        return Err(bad());
    }
    let steps = ((end - start) * den / num + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| start + k as f64 * num / den).collect())
}

/// Which subject's curve to compute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectRef {
    Id(String),
    New,
}

impl SubjectRef {
    pub fn parse(s: &str) -> Self {
        if s == "new" {
            SubjectRef::New
        } else {
            SubjectRef::Id(s.to_string())
        }
    }
}

/// One posterior draw's parameters needed for prediction.
#[derive(Debug, Clone, Copy)]
pub struct DrawParams<T> {
    pub mu0: T,
    pub sigma2: T,
    pub rho: T,
    pub nu: T,
    pub noise_var: T,
}

impl<T: Real> DrawParams<T> {
    pub fn from_draws(d: &PosteriorDraws<T>, s: usize) -> Self {
        Self {
            mu0: d.mu0()[s],
            sigma2: d.sigma2()[s],
            rho: d.rho()[s],
            nu: d.nu()[s],
            noise_var: d.noise_var()[s],
        }
    }
}

/// Multiplier turning `Ψ_φ` into the marginal signal covariance.
fn marginal_cov_factor<T: Real>(nu: T, model: MeanModel) -> T {
    match model {
        MeanModel::Hierarchical => T::one(),
        MeanModel::Constant => T::one() / (nu - T::lit(2.0)),
    }
}

/// Completes a pooled-grid signal on `τ⁺` by drawing `τ̌` from the Student-t
/// process conditional given the pooled values.
pub fn extend_signal_to_fine_grid<T: Real>(
    z_pooled: &[T],
    pooled: &[T],
    p: &DrawParams<T>,
    model: MeanModel,
    fine: &FineGrid<T>,
    rng: &mut ChainRng,
) -> Result<DVector<T>> {
    if z_pooled.len() != pooled.len() || fine.pooled_pos.len() != pooled.len() {
        return Err(Error::DimensionMismatch("signal length vs pooled grid".into()));
    }
    let mut out = DVector::zeros(fine.len());
    for (&k, &z) in fine.pooled_pos.iter().zip(z_pooled) {
        out[k] = z;
    }
    if fine.extra_pos.is_empty() {
        return Ok(out);
    }
    let kern = MaternParams::new(p.sigma2, p.rho)?;
    let extra_t: Vec<T> = fine.extra_pos.iter().map(|&k| fine.times[k]).collect();
    let c = marginal_cov_factor(p.nu, model);
    let c_bb = covariance_matrix(pooled, pooled, &kern) * c;
    let c_ab = covariance_matrix(&extra_t, pooled, &kern) * c;
    let c_aa = covariance_matrix(&extra_t, &extra_t, &kern) * c;
    let chol = cholesky_with_jitter(c_bb, p.sigma2 * c, "pooled-grid kernel")?;
    let resid = DVector::from_iterator(pooled.len(), z_pooled.iter().map(|&z| z - p.mu0));
    let alpha = chol.solve(&resid);
    let s = resid.dot(&alpha);
    let mean = DVector::from_element(extra_t.len(), p.mu0) + &c_ab * alpha;
    let mut schur = c_aa - &c_ab * chol.solve(&c_ab.transpose());
    crate::linalg::symmetrize(&mut schur);
    let nb = T::of_usize(pooled.len());
    let two = T::lit(2.0);
    let cond = MvtParams::new(p.nu + nb, mean, schur * ((p.nu + s - two) / (p.nu + nb - two)))?;
    let draw = sample_mvt_jitter(&cond, p.sigma2 * c, rng)?;
    for (a, &k) in fine.extra_pos.iter().enumerate() {
        out[k] = draw[a];
    }
    Ok(out)
}

/// MVT draw applying the kernel jitter policy to the covariance.
fn sample_mvt_jitter<T: Real>(p: &MvtParams<T>, scale: T, rng: &mut ChainRng) -> Result<DVector<T>> {
    let chol = cholesky_with_jitter(p.cov.clone(), scale, "predictive covariance")?;
    let e = standard_normal_vector(p.dim(), rng);
    let w = sample_chisq(p.nu.f64(), rng);
    let k = T::lit(((p.nu.f64() - 2.0) / w).sqrt());
    Ok(&p.mean + lower_mul(&chol, &e) * k)
}

/// Signal for a new subject on `times`, drawn from the marginal process
/// `MVT(ν, μ0·1, Ψ_φ)`.
pub fn new_subject_signal<T: Real>(
    times: &[T],
    p: &DrawParams<T>,
    model: MeanModel,
    rng: &mut ChainRng,
) -> Result<DVector<T>> {
    let kern = MaternParams::new(p.sigma2, p.rho)?;
    let c = marginal_cov_factor(p.nu, model);
    let cov = covariance_matrix(times, times, &kern) * c;
    let mvt = MvtParams::new(p.nu, DVector::from_element(times.len(), p.mu0), cov)?;
    sample_mvt_jitter(&mvt, p.sigma2 * c, rng)
}

/// Per-draw signal on `τ⁺` for `subject` (existing id or new).
pub fn signal_on_fine_grid<T: Real>(
    draws: &PosteriorDraws<T>,
    s: usize,
    subject: Option<usize>,
    fine: &FineGrid<T>,
    rng: &mut ChainRng,
) -> Result<DVector<T>> {
    let p = DrawParams::from_draws(draws, s);
    let model = draws.meta.mean_model;
    match subject {
        Some(i) => extend_signal_to_fine_grid(draws.signal(s, i), draws.pooled().times(), &p, model, fine, rng),
        None => new_subject_signal(fine.times(), &p, model, rng),
    }
}

/// Resolves a subject reference against the draws (`None` for new).
pub fn resolve_subject<T: Real>(draws: &PosteriorDraws<T>, subject: &SubjectRef) -> Result<Option<usize>> {
    match subject {
        SubjectRef::New => Ok(None),
        SubjectRef::Id(id) => draws
            .subject_index(id)
            .map(Some)
            .ok_or_else(|| Error::UnknownSubject(id.clone())),
    }
}

/// Monte Carlo estimate of `E[expit(Z + ε)]`, `ε ∼ N(0, v)`.
pub fn inner_expit_mean<T: Real>(z: T, noise_var: T, m: usize, rng: &mut ChainRng) -> T {
    if noise_var == T::zero() {
        return expit(z);
    }
    let sd = noise_var.sqrt().f64();
    let z = z.f64();
    let acc: f64 = (0..m).map(|_| expit(z + sd * std_normal(rng))).sum();
    T::lit(acc / m as f64)
}

/// Pointwise posterior summary of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate<T> {
    pub times: Vec<T>,
    pub mean: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub level: f64,
    /// Per-draw curves (draw-major), when requested.
    #[serde(skip)]
    pub draws: Option<Vec<Vec<T>>>,
}

/// Summarizes per-draw curves (draw-major) pointwise.
pub fn summarize_curves<T: Real>(times: &[T], per_draw: Vec<Vec<T>>, level: f64, keep: bool) -> CurveEstimate<T> {
    let n_t = times.len();
    let tail = 0.5 * (1.0 - level);
    let mut mean = Vec::with_capacity(n_t);
    let mut lower = Vec::with_capacity(n_t);
    let mut upper = Vec::with_capacity(n_t);
    for k in 0..n_t {
        let mut col: Vec<T> = per_draw.iter().map(|c| c[k]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mean.push(crate::summary::mean(&col));
        lower.push(quantile_sorted(&col, tail));
        upper.push(quantile_sorted(&col, 1.0 - tail));
    }
    // Guard the ordering against rounding in the mean.
    for k in 0..n_t {
        mean[k] = mean[k].max(lower[k]).min(upper[k]);
    }
    CurveEstimate {
        times: times.to_vec(),
        mean,
        lower,
        upper,
        level,
        draws: keep.then_some(per_draw),
    }
}

/// Options shared by the curve routines.
#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    pub mc_inner: usize,
    pub level: f64,
    pub seed: u64,
    pub keep_draws: bool,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            mc_inner: DEFAULT_MC_INNER,
            level: 0.95,
            seed: 0,
            keep_draws: false,
        }
    }
}

/// Probability response curve `P(Y(τ) = 1)` on `τ⁺`. Per draw: complete the
/// signal on `τ⁺`, then average `expit` over `𝒵 ∼ N(Z, σε²)`.
pub fn probability_response_curve<T: Real>(
    draws: &PosteriorDraws<T>,
    subject: &SubjectRef,
    fine: &FineGrid<T>,
    opts: &CurveOptions,
) -> Result<CurveEstimate<T>> {
    if opts.mc_inner == 0 {
        return Err(Error::InvalidParameter("mc_inner must be at least 1".into()));
    }
    let who = resolve_subject(draws, subject)?;
    let per_draw: Vec<Vec<T>> = (0..draws.n_draws())
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(opts.seed, s as u64);
            let z = signal_on_fine_grid(draws, s, who, fine, &mut rng)?;
            let v = draws.noise_var()[s];
            Ok(z.iter().map(|&zt| inner_expit_mean(zt, v, opts.mc_inner, &mut rng)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(summarize_curves(fine.times(), per_draw, opts.level, opts.keep_draws))
}

/// Binary-process second moments at a pair of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryCovariance<T> {
    /// `Var(Y_τ | Z, σε²)` across draws.
    pub var_a: Summary<T>,
    pub var_b: Summary<T>,
    /// `Cov(Y_τ, Y_τ′ | Z, σε²)` across draws.
    pub cov: Summary<T>,
    /// Posterior-marginal covariance by the law of total covariance:
    /// `mean_s Cov_s + Cov_s(P_τ, P_τ′)`.
    pub total_cov: T,
}

/// Conditional variance and covariance of the binary process for one
/// subject at `(τ, τ′)`, from independent inner draws of `𝒵_τ, 𝒵_τ′`.
pub fn binary_covariance<T: Real>(
    draws: &PosteriorDraws<T>,
    subject: &SubjectRef,
    pair: (T, T),
    opts: &CurveOptions,
) -> Result<BinaryCovariance<T>> {
    let fine = FineGrid::new(draws.pooled().times(), &[pair.0, pair.1])?;
    let ka = fine.position(pair.0).expect("pair time in grid");
    let kb = fine.position(pair.1).expect("pair time in grid");
    let who = resolve_subject(draws, subject)?;
    let m = opts.mc_inner.max(2);
    let rows: Vec<[f64; 5]> = (0..draws.n_draws())
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(opts.seed, s as u64);
            let z = signal_on_fine_grid(draws, s, who, &fine, &mut rng)?;
            let sd = draws.noise_var()[s].sqrt().f64();
            let (za, zb) = (z[ka].f64(), z[kb].f64());
            let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
            for _ in 0..m {
                let pa = expit(za + sd * std_normal(&mut rng));
                let pb = if ka == kb { pa } else { expit(zb + sd * std_normal(&mut rng)) };
                sa += pa;
                sb += pb;
                sab += pa * pb;
            }
            let mf = m as f64;
            let (ea, eb) = (sa / mf, sb / mf);
            let var_a = ea - ea * ea;
            let var_b = eb - eb * eb;
            let cov = if ka == kb { var_a } else { sab / mf - ea * eb };
            Ok([var_a, var_b, cov, ea, eb])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| -> Vec<T> { rows.iter().map(|r| T::lit(r[j])).collect() };
    let level = opts.level;
    let ea: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let eb: Vec<f64> = rows.iter().map(|r| r[4]).collect();
    let n = rows.len() as f64;
    let ma = ea.iter().sum::<f64>() / n;
    let mb = eb.iter().sum::<f64>() / n;
    let between = ea.iter().zip(&eb).map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / n;
    let within = rows.iter().map(|r| r[2]).sum::<f64>() / n;
    Ok(BinaryCovariance {
        var_a: crate::summary::summarize(&col(0), level),
        var_b: crate::summary::summarize(&col(1), level),
        cov: crate::summary::summarize(&col(2), level),
        total_cov: T::lit(within + between),
    })
}

/// Delta-method approximations to `P(Y_τ = 1)` and `Cov(Y_τ, Y_τ′)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaApprox<T> {
    pub prob_a: T,
    pub prob_b: T,
    pub cov: T,
}

fn d1<T: Real>(x: T) -> T {
    let p = expit(x);
    p * (T::one() - p)
}

fn d2<T: Real>(x: T) -> T {
    let p = expit(x);
    p * (T::one() - p) * (T::one() - p - p)
}

/// Second-order approximation of `E[expit(Z + ε)]` with `Z` of mean `m`
/// and variance `v`, `ε` of variance `noise_var`.
pub fn delta_approx_prob<T: Real>(m: T, v: T, noise_var: T) -> T {
    expit(m) + (v + noise_var) * T::lit(0.5) * d2(m)
}

/// Delta-method probability at two time points and their covariance.
pub fn delta_approx_curve_and_cov<T: Real>(
    mean: (T, T),
    var: (T, T),
    cov: T,
    noise_var: T,
) -> DeltaApprox<T> {
    let (ma, mb) = mean;
    let (va, vb) = var;
    let quarter = T::lit(0.25);
    DeltaApprox {
        prob_a: delta_approx_prob(ma, va, noise_var),
        prob_b: delta_approx_prob(mb, vb, noise_var),
        cov: d1(ma) * d1(mb) * cov - quarter * (va + noise_var) * (vb + noise_var) * d2(ma) * d2(mb),
    }
}

/// Posterior summary of `Ψ_φ(d)` over distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCurve<T> {
    pub distances: Vec<T>,
    pub mean: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub level: f64,
}

/// Evaluates the kernel per draw of `(σ², ρ)` at each distance and summarizes
/// pointwise. Under the constant-mean model the marginal signal covariance
/// is `Ψ_φ/(ν − 2)`, and that is what is summarized.
pub fn posterior_covariance_kernel<T: Real>(draws: &PosteriorDraws<T>, distances: &[T], level: f64) -> Result<KernelCurve<T>> {
    if draws.n_draws() == 0 {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    let model = draws.meta.mean_model;
    let per_draw: Vec<Vec<T>> = (0..draws.n_draws())
        .map(|s| {
            let kern = MaternParams::new(draws.sigma2()[s], draws.rho()[s])?;
            let c = marginal_cov_factor(draws.nu()[s], model);
            distances
                .iter()
                .map(|&d| Ok(crate::kernels::matern52(d, &kern)? * c))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let est = summarize_curves(distances, per_draw, level, false);
    Ok(KernelCurve {
        distances: est.times,
        mean: est.mean,
        lower: est.lower,
        upper: est.upper,
        level,
    })
}
