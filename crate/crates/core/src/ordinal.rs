//! Ordinal responses through continuation-ratio logits: decomposition into
//! nested binary datasets, independent per-category fits, and ordinal
//! probability curves and joint probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, BinarySubject, OrdinalDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::gibbs::{log_observation_density, log_prior_density, run_chain, SamplerConfig};
use crate::predict::{inner_expit_mean, resolve_subject, signal_on_fine_grid, summarize_curves, CurveEstimate, CurveOptions, FineGrid, SubjectRef};
use crate::prior::PriorConfig;
use crate::randdist::{derive_seed, std_normal, substream};
use crate::scalar::{expit, Real};
use crate::state::{ChainState, MeanModel, PosteriorDraws};
use crate::summary::{summarize, Summary};

/// Binary dataset `𝒟ⱼ` with its map back to the ordinal data.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryData<T> {
    /// `None` when no observation reaches this category.
    pub dataset: Option<BinaryDataset<T>>,
    /// Original subject index of each subject in `dataset`.
    pub subjects: Vec<usize>,
    /// Original observation indices kept for each subject in `dataset`.
    pub observations: Vec<Vec<usize>>,
}

impl<T> CategoryData<T> {
    /// `ℐⱼ` as `(subject, observation)` pairs into the ordinal dataset, in
    /// the order the binary dataset stores them.
    pub fn index_map(&self) -> Vec<(usize, usize)> {
        self.subjects
            .iter()
            .zip(&self.observations)
            .flat_map(|(&i, obs)| obs.iter().map(move |&t| (i, t)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.observations.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The `C − 1` nested binary datasets of an ordinal dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalDecomposition<T> {
    pub categories: u32,
    pub n_subjects: usize,
    pub subject_ids: Vec<String>,
    pub parts: Vec<CategoryData<T>>,
}

/// Splits ordinal data into `𝒟₁ … 𝒟_{C−1}`: `𝒟ⱼ` keeps observations with
/// `Y ≥ j` and codes them `1` iff `Y = j`.
pub fn decompose<T: Real>(ds: &OrdinalDataset<T>) -> Result<OrdinalDecomposition<T>> {
    let c = ds.categories();
    if c < 2 {
        return Err(Error::InvalidParameter("ordinal data needs at least two categories".into()));
    }
    let mut parts = Vec::with_capacity(c as usize - 1);
    for j in 1..c {
        let mut subjects = Vec::new();
        let mut observations = Vec::new();
        let mut bins = Vec::new();
        for (i, s) in ds.subjects().iter().enumerate() {
            let keep: Vec<usize> = (0..s.responses.len()).filter(|&t| s.responses[t] >= j).collect();
            if keep.is_empty() {
                continue;
            }
            let times = keep.iter().map(|&t| s.grid.times()[t]).collect();
            bins.push(BinarySubject {
                id: s.id.clone(),
                grid: TimeGrid::new(times)?,
                responses: keep.iter().map(|&t| u8::from(s.responses[t] == j)).collect(),
            });
            subjects.push(i);
            observations.push(keep);
        }
        let dataset = if bins.is_empty() { None } else { Some(BinaryDataset::new(bins)?) };
        parts.push(CategoryData {
            dataset,
            subjects,
            observations,
        });
    }
    Ok(OrdinalDecomposition {
        categories: c,
        n_subjects: ds.subjects().len(),
        subject_ids: ds.subjects().iter().map(|s| s.id.clone()).collect(),
        parts,
    })
}

/// Recovers the ordinal responses: the first category whose indicator is 1,
/// or `C` when every indicator is 0.
pub fn reconstruct<T: Real>(dec: &OrdinalDecomposition<T>, n_obs: &[usize]) -> Result<Vec<Vec<u32>>> {
    if n_obs.len() != dec.n_subjects {
        return Err(Error::DimensionMismatch("observation counts vs subjects".into()));
    }
    let mut out: Vec<Vec<u32>> = n_obs.iter().map(|&m| vec![0; m]).collect();
    for (jm1, part) in dec.parts.iter().enumerate() {
        let Some(bin) = &part.dataset else { continue };
        for (b, (&i, obs)) in part.subjects.iter().zip(&part.observations).enumerate() {
            for (r, &t) in obs.iter().enumerate() {
                if bin.subjects()[b].responses[r] == 1 && out[i][t] == 0 {
                    out[i][t] = jm1 as u32 + 1;
                }
            }
        }
    }
    for y in out.iter_mut().flatten() {
        if *y == 0 {
            *y = dec.categories;
        }
    }
    Ok(out)
}

/// Sampler seed used for category `j` (1-based); category 1 keeps the base
/// seed so a two-category fit matches the binary fit.
pub fn category_seed(base: u64, j: usize) -> u64 {
    derive_seed(base, j as u64 - 1)
}

/// Fits the binary model to every `𝒟ⱼ` with its own priors and seed.
/// Categories run concurrently when `parallel` is set; the draws do not
/// depend on it.
pub fn fit_ordinal<T: Real>(
    dec: &OrdinalDecomposition<T>,
    priors: &[PriorConfig<T>],
    cfg: &SamplerConfig,
    parallel: bool,
) -> Result<Vec<PosteriorDraws<T>>> {
    if priors.len() != dec.parts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} prior sets for {} categories",
            priors.len(),
            dec.parts.len()
        )));
    }
    for (jm1, part) in dec.parts.iter().enumerate() {
        if part.dataset.is_none() {
            return Err(Error::CategoryUnreachable(jm1 + 1));
        }
    }
    let fit = |jm1: usize| {
        let mut c = cfg.clone();
        c.seed = category_seed(cfg.seed, jm1 + 1);
        run_chain(dec.parts[jm1].dataset.as_ref().expect("checked"), &priors[jm1], &c)
    };
    if parallel {
        (0..dec.parts.len()).into_par_iter().map(fit).collect()
    } else {
        (0..dec.parts.len()).map(fit).collect()
    }
}

fn check_aligned<T: Real>(fits: &[PosteriorDraws<T>]) -> Result<usize> {
    let Some(first) = fits.first() else {
        return Err(Error::InvalidParameter("no category fits".into()));
    };
    let s = first.n_draws();
    if s == 0 {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    if fits.iter().any(|f| f.n_draws() != s) {
        return Err(Error::DimensionMismatch("categories have different numbers of draws".into()));
    }
    Ok(s)
}

/// Per-category subject lookup. A subject whose responses never reach
/// category `j` is absent from `𝒟ⱼ` and is treated as new there.
fn resolve_per_category<T: Real>(fits: &[PosteriorDraws<T>], subject: &SubjectRef) -> Result<Vec<Option<usize>>> {
    let base = resolve_subject(&fits[0], subject)?;
    Ok(fits
        .iter()
        .map(|f| match (subject, base) {
            (SubjectRef::Id(id), Some(_)) => f.subject_index(id),
            _ => None,
        })
        .collect())
}

/// Signals of every category for draw `s` on `times`, with the per-category
/// grids re-aligned on the common points.
fn category_signals<T: Real>(
    fits: &[PosteriorDraws<T>],
    who: &[Option<usize>],
    times: &[T],
    s: usize,
    seed: u64,
) -> Result<Vec<(Vec<T>, crate::randdist::ChainRng)>> {
    fits.iter()
        .zip(who)
        .enumerate()
        .map(|(jm1, (f, &w))| {
            let fine = FineGrid::new(f.pooled().times(), times)?;
            let mut rng = substream(derive_seed(seed, jm1 as u64), s as u64);
            let z = signal_on_fine_grid(f, s, w, &fine, &mut rng)?;
            let picked = times.iter().map(|&t| z[fine.position(t).expect("time in grid")]).collect();
            Ok((picked, rng))
        })
        .collect()
}

/// `P(Y(τ) = j)` for `j = 1 … C` on `τ⁺` (the pooled grid of the full data
/// merged with `requested`). Draw `s` of every category is paired with draw
/// `s` of the others.
pub fn ordinal_probability_curves<T: Real>(
    fits: &[PosteriorDraws<T>],
    subject: &SubjectRef,
    requested: &[T],
    opts: &CurveOptions,
) -> Result<Vec<CurveEstimate<T>>> {
    let n_draws = check_aligned(fits)?;
    if opts.mc_inner == 0 {
        return Err(Error::InvalidParameter("mc_inner must be at least 1".into()));
    }
    let who = resolve_per_category(fits, subject)?;
    let out = FineGrid::new(fits[0].pooled().times(), requested)?;
    let times = out.times();
    let c = fits.len() + 1;
    let per_draw: Vec<Vec<Vec<T>>> = (0..n_draws)
        .into_par_iter()
        .map(|s| {
            let sig = category_signals(fits, &who, times, s, opts.seed)?;
            let cond: Vec<Vec<T>> = sig
                .into_iter()
                .enumerate()
                .map(|(jm1, (z, mut rng))| {
                    let v = fits[jm1].noise_var()[s];
                    z.iter().map(|&zt| inner_expit_mean(zt, v, opts.mc_inner, &mut rng)).collect()
                })
                .collect();
            Ok(chain_probabilities(&cond, times.len()))
        })
        .collect::<Result<_>>()?;
    Ok((0..c)
        .map(|j| {
            let curves = per_draw.iter().map(|d| d[j].clone()).collect();
            summarize_curves(times, curves, opts.level, opts.keep_draws)
        })
        .collect())
}

/// Turns per-category continuation probabilities `E[π_j]` into category
/// probabilities `E[π_j] ∏_{k<j} (1 − E[π_k])`, with `π_C ≡ 1`.
pub fn chain_probabilities<T: Real>(cond: &[Vec<T>], n_t: usize) -> Vec<Vec<T>> {
    let mut out = Vec::with_capacity(cond.len() + 1);
    let mut survive = vec![T::one(); n_t];
    for e in cond {
        out.push((0..n_t).map(|k| e[k] * survive[k]).collect());
        for k in 0..n_t {
            survive[k] = survive[k] * (T::one() - e[k]);
        }
    }
    out.push(survive);
    out
}

/// Inner expectations of one category at a pair of times:
/// `E[π_a π_b]`, `E[π_a(1−π_b)]`, `E[(1−π_a)π_b]`, `E[(1−π_a)(1−π_b)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoments {
    pub both: f64,
    pub first_only: f64,
    pub second_only: f64,
    pub neither: f64,
}

impl PairMoments {
    pub fn first(&self) -> f64 {
        self.both + self.first_only
    }

    pub fn second(&self) -> f64 {
        self.both + self.second_only
    }

    /// Moments of `π ≡ 1` (the top category).
    pub fn certain() -> Self {
        Self {
            both: 1.0,
            first_only: 0.0,
            second_only: 0.0,
            neither: 0.0,
        }
    }
}

/// Monte Carlo pair moments given signals `(za, zb)`. The two times share the
/// noise draw when `same_time` is set.
pub fn pair_moments(za: f64, zb: f64, noise_var: f64, same_time: bool, m: usize, rng: &mut crate::randdist::ChainRng) -> PairMoments {
    if noise_var == 0.0 {
        let (a, b) = (expit(za), expit(zb));
        return PairMoments {
            both: a * b,
            first_only: a * (1.0 - b),
            second_only: (1.0 - a) * b,
            neither: (1.0 - a) * (1.0 - b),
        };
    }
    let sd = noise_var.sqrt();
    let (mut ab, mut a_nb, mut na_b, mut na_nb) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..m {
        let ea = sd * std_normal(rng);
        let eb = if same_time { ea } else { sd * std_normal(rng) };
        let (a, b) = (expit(za + ea), expit(zb + eb));
        ab += a * b;
        a_nb += a * (1.0 - b);
        na_b += (1.0 - a) * b;
        na_nb += (1.0 - a) * (1.0 - b);
    }
    let mf = m as f64;
    PairMoments {
        both: ab / mf,
        first_only: a_nb / mf,
        second_only: na_b / mf,
        neither: na_nb / mf,
    }
}

/// `P(Y_τ = j, Y_τ′ = j′)` from per-category pair moments (`moments[k]` for
/// category `k + 1`, `k < C − 1`). Both responses pass every category below
/// `min(j, j′)` jointly; the lower one then stops while the other keeps
/// passing categories alone until it stops at its own.
pub fn joint_from_moments(moments: &[PairMoments], j: usize, jp: usize) -> f64 {
    let c = moments.len() + 1;
    assert!((1..=c).contains(&j) && (1..=c).contains(&jp), "category out of range");
    let get = |k: usize| if k < c { moments[k - 1] } else { PairMoments::certain() };
    let lo = j.min(jp);
    let mut v: f64 = (1..lo).map(|k| get(k).neither).product();
    if j == jp {
        return v * get(j).both;
    }
    if j < jp {
        v *= get(j).first_only;
        v *= (j + 1..jp).map(|k| 1.0 - get(k).second()).product::<f64>();
        v * get(jp).second()
    } else {
        v *= get(jp).second_only;
        v *= (jp + 1..j).map(|k| 1.0 - get(k).first()).product::<f64>();
        v * get(j).first()
    }
}

/// Posterior summary of `P(Y_τ = j, Y_τ′ = j′)` for one subject, categories
/// 1-based.
pub fn ordinal_joint_probability<T: Real>(
    fits: &[PosteriorDraws<T>],
    subject: &SubjectRef,
    pair: (T, T),
    cats: (usize, usize),
    opts: &CurveOptions,
) -> Result<Summary<f64>> {
    let per_draw = ordinal_joint_table(fits, subject, pair, opts)?;
    let c = fits.len() + 1;
    let (j, jp) = cats;
    if !(1..=c).contains(&j) || !(1..=c).contains(&jp) {
        return Err(Error::InvalidParameter(format!("categories must lie in 1..={c}")));
    }
    let vals: Vec<f64> = per_draw.iter().map(|m| joint_from_moments(m, j, jp)).collect();
    Ok(summarize(&vals, opts.level))
}

/// Per-draw pair moments of every category at `(τ, τ′)`.
pub fn ordinal_joint_table<T: Real>(
    fits: &[PosteriorDraws<T>],
    subject: &SubjectRef,
    pair: (T, T),
    opts: &CurveOptions,
) -> Result<Vec<Vec<PairMoments>>> {
    let n_draws = check_aligned(fits)?;
    let who = resolve_per_category(fits, subject)?;
    let same = pair.0 == pair.1;
    let times = if same { vec![pair.0] } else { vec![pair.0.min(pair.1), pair.0.max(pair.1)] };
    let (ia, ib) = if same {
        (0, 0)
    } else if pair.0 < pair.1 {
        (0, 1)
    } else {
        (1, 0)
    };
    let m = opts.mc_inner.max(1);
    (0..n_draws)
        .into_par_iter()
        .map(|s| {
            let sig = category_signals(fits, &who, &times, s, opts.seed)?;
            Ok(sig
                .into_iter()
                .enumerate()
                .map(|(jm1, (z, mut rng))| {
                    let v = fits[jm1].noise_var()[s].f64();
                    pair_moments(z[ia].f64(), z[ib].f64(), v, same, m, &mut rng)
                })
                .collect())
        })
        .collect()
}

/// Joint log-posterior of the ordinal model, evaluated from the multinomial
/// factorization over the original observations, with category `j`'s
/// parameters and latent values taken from `states[j − 1]` (laid out on
/// `𝒟ⱼ`'s pooled grid).
pub fn ordinal_log_joint<T: Real>(
    ds: &OrdinalDataset<T>,
    dec: &OrdinalDecomposition<T>,
    priors: &[PriorConfig<T>],
    states: &[ChainState<T>],
    mean_model: MeanModel,
) -> Result<f64> {
    if states.len() != dec.parts.len() || priors.len() != dec.parts.len() {
        return Err(Error::DimensionMismatch("one state and prior per category".into()));
    }
    // Position of each original (i, t) in every 𝒟ⱼ.
    let mut lookup: Vec<std::collections::HashMap<(usize, usize), (usize, usize)>> = Vec::new();
    for part in &dec.parts {
        let mut map = std::collections::HashMap::new();
        for (b, (&i, obs)) in part.subjects.iter().zip(&part.observations).enumerate() {
            for (r, &t) in obs.iter().enumerate() {
                map.insert((i, t), (b, r));
            }
        }
        lookup.push(map);
    }
    let mut lp = 0.0;
    for (i, s) in ds.subjects().iter().enumerate() {
        for (t, &y) in s.responses.iter().enumerate() {
            // m_ijt = 1 for j ≤ min(y, C − 1); the j-th binomial has outcome y = j.
            for jm1 in 0..(y.min(dec.categories - 1) as usize) {
                let (b, r) = lookup[jm1][&(i, t)];
                let st = &states[jm1];
                let pooled = dec.parts[jm1].dataset.as_ref().expect("reached category").pooled();
                let k = pooled.observed(b)[r];
                let yj = u8::from(y as usize == jm1 + 1);
                lp += log_observation_density(yj, st.latent_noisy[b][r], st.signals[b][k], st.noise_var);
            }
        }
    }
    for (jm1, part) in dec.parts.iter().enumerate() {
        let bin = part.dataset.as_ref().ok_or(Error::CategoryUnreachable(jm1 + 1))?;
        lp += log_prior_density(bin.pooled().times(), &priors[jm1], &states[jm1], mean_model)?;
    }
    Ok(lp)
}

/// Serializable form of the index maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMapExport {
    pub categories: u32,
    pub subject_ids: Vec<String>,
    /// `maps[j − 1]` lists `(subject, observation)` pairs of `ℐⱼ`.
    pub maps: Vec<Vec<(usize, usize)>>,
}

impl<T> OrdinalDecomposition<T> {
    pub fn index_export(&self) -> IndexMapExport {
        IndexMapExport {
            categories: self.categories,
            subject_ids: self.subject_ids.clone(),
            maps: self.parts.iter().map(CategoryData::index_map).collect(),
        }
    }
}

#[cfg(test)]
mod tests;
