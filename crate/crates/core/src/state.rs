//! Sampler state and stored posterior draws.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{pool_grids, PooledGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::kernels::MaternParams;
use crate::linalg::cholesky_spd;
use crate::prior::PriorConfig;
use crate::scalar::Real;

/// Mean structure of the signal process.
///
/// `Hierarchical` is the full model with `μ ∼ N(μ0·1, (ν−3)Σ)`.
/// `Constant` fixes `μ = μ0·1`, the simplified comparison variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanModel {
    #[default]
    Hierarchical,
    Constant,
}

/// Full parameter state after one Gibbs sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T: Real> {
    /// Noisy latent signal per subject on its own grid.
    pub latent_noisy: Vec<DVector<T>>,
    /// Pólya-Gamma auxiliaries, aligned with `latent_noisy`.
    pub pg: Vec<DVector<T>>,
    /// Complete signal per subject on the pooled grid.
    pub signals: Vec<DVector<T>>,
    pub mu: DVector<T>,
    pub sigma: DMatrix<T>,
    pub noise_var: T,
    pub mu0: T,
    pub sigma2: T,
    pub rho: T,
    pub nu: T,
}

impl<T: Real> ChainState<T> {
    /// `κ = 1/(ν − 3)`.
    pub fn kappa(&self) -> T {
        T::one() / (self.nu - T::lit(3.0))
    }

    pub fn kernel(&self) -> MaternParams<T> {
        MaternParams {
            sigma2: self.sigma2,
            rho: self.rho,
        }
    }

    /// Signal of subject `i` restricted to its observation times.
    pub fn observed_signal(&self, pooled: &PooledGrid<T>, i: usize) -> DVector<T> {
        crate::linalg::subvector(&self.signals[i], pooled.observed(i))
    }

    /// Checks the state invariants against the prior support.
    pub fn check(&self, priors: &PriorConfig<T>) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("chain state: {m}")));
        if !(self.noise_var > T::zero()) {
            return bad("noise variance must be positive");
        }
        if !(self.sigma2 > T::zero()) {
            return bad("sigma2 must be positive");
        }
        if !(self.rho > priors.a_rho && self.rho < priors.b_rho) {
            return bad("rho outside prior support");
        }
        if !(self.nu > priors.a_nu && self.nu < priors.b_nu && self.nu > T::lit(3.0)) {
            return bad("nu outside prior support");
        }
        if !self.mu0.is_finite_real() {
            return bad("mu0 not finite");
        }
        let p = self.mu.len();
        if self.sigma.shape() != (p, p) {
            return bad("sigma has wrong shape");
        }
        if (&self.sigma - self.sigma.transpose()).amax() > T::lit(1e-9) * self.sigma.amax() {
            return bad("sigma not symmetric");
        }
        if nalgebra::Cholesky::new(self.sigma.clone()).is_none() {
            cholesky_spd(self.sigma.clone(), "chain state sigma")?;
        }
        Ok(())
    }
}

/// Run metadata stored with the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
    pub total_iterations: usize,
    pub grid_size: usize,
    pub mean_model: MeanModel,
    /// Cumulative wall-clock seconds per Gibbs step (steps 1 to 9).
    pub step_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// Names of the scalar parameter traces, in storage order.
pub const SCALAR_NAMES: [&str; 5] = ["noise_var", "mu0", "sigma2", "rho", "nu"];

/// Thinned post-burn-in draws. Per-draw arrays are stored flat with the draw
/// index as the leading dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<T: Real> {
    pub meta: DrawsMeta,
    subject_ids: Vec<String>,
    subject_grids: Vec<TimeGrid<T>>,
    pooled: PooledGrid<T>,
    n_draws: usize,
    scalars: [Vec<T>; 5],
    mu: Vec<T>,
    signals: Vec<T>,
    latent_noisy: Option<Vec<T>>,
    pg: Option<Vec<T>>,
    sigma: Option<Vec<T>>,
}

/// Which optional per-draw arrays are kept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreOptions {
    pub latents: bool,
    pub covariance: bool,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn new(
        meta: DrawsMeta,
        subject_ids: Vec<String>,
        subject_grids: Vec<TimeGrid<T>>,
        store: StoreOptions,
    ) -> Result<Self> {
        if subject_ids.len() != subject_grids.len() {
            return Err(Error::DimensionMismatch("subject ids vs grids".into()));
        }
        let pooled = pool_grids(&subject_grids)?;
        Ok(Self {
            meta,
            subject_ids,
            subject_grids,
            pooled,
            n_draws: 0,
            scalars: Default::default(),
            mu: Vec::new(),
            signals: Vec::new(),
            latent_noisy: store.latents.then(Vec::new),
            pg: store.latents.then(Vec::new),
            sigma: store.covariance.then(Vec::new),
        })
    }

    pub fn push(&mut self, st: &ChainState<T>) {
        let vals = [st.noise_var, st.mu0, st.sigma2, st.rho, st.nu];
        for (trace, v) in self.scalars.iter_mut().zip(vals) {
            trace.push(v);
        }
        self.mu.extend(st.mu.iter().copied());
        for z in &st.signals {
            self.signals.extend(z.iter().copied());
        }
        if let Some(buf) = self.latent_noisy.as_mut() {
            for z in &st.latent_noisy {
                buf.extend(z.iter().copied());
            }
        }
        if let Some(buf) = self.pg.as_mut() {
            for z in &st.pg {
                buf.extend(z.iter().copied());
            }
        }
        if let Some(buf) = self.sigma.as_mut() {
            buf.extend(st.sigma.iter().copied());
        }
        self.n_draws += 1;
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// Pooled-grid dimension `|τ|`.
    pub fn dim(&self) -> usize {
        self.pooled.len()
    }

    pub fn n_observations(&self) -> usize {
        self.subject_grids.iter().map(|g| g.len()).sum()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn subject_grids(&self) -> &[TimeGrid<T>] {
        &self.subject_grids
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == id)
    }

    pub fn pooled(&self) -> &PooledGrid<T> {
        &self.pooled
    }

    pub fn scalar(&self, name: &str) -> Option<&[T]> {
        SCALAR_NAMES.iter().position(|&n| n == name).map(|k| self.scalars[k].as_slice())
    }

    pub fn noise_var(&self) -> &[T] {
        &self.scalars[0]
    }

    pub fn mu0(&self) -> &[T] {
        &self.scalars[1]
    }

    pub fn sigma2(&self) -> &[T] {
        &self.scalars[2]
    }

    pub fn rho(&self) -> &[T] {
        &self.scalars[3]
    }

    pub fn nu(&self) -> &[T] {
        &self.scalars[4]
    }

    pub fn mu(&self, s: usize) -> &[T] {
        let p = self.dim();
        &self.mu[s * p..(s + 1) * p]
    }

    /// Pooled-grid signal of subject `i` at draw `s`.
    pub fn signal(&self, s: usize, i: usize) -> &[T] {
        let p = self.dim();
        let off = (s * self.n_subjects() + i) * p;
        &self.signals[off..off + p]
    }

    /// Signal of subject `i` at draw `s` and pooled-grid index `k`.
    pub fn signal_at(&self, s: usize, i: usize, k: usize) -> T {
        self.signal(s, i)[k]
    }

    fn obs_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.n_subjects() + 1);
        let mut acc = 0;
        off.push(0);
        for g in &self.subject_grids {
            acc += g.len();
            off.push(acc);
        }
        off
    }

    pub fn latent_noisy(&self, s: usize, i: usize) -> Option<&[T]> {
        let buf = self.latent_noisy.as_ref()?;
        let off = self.obs_offsets();
        let n = self.n_observations();
        Some(&buf[s * n + off[i]..s * n + off[i + 1]])
    }

    pub fn pg(&self, s: usize, i: usize) -> Option<&[T]> {
        let buf = self.pg.as_ref()?;
        let off = self.obs_offsets();
        let n = self.n_observations();
        Some(&buf[s * n + off[i]..s * n + off[i + 1]])
    }

    pub fn sigma(&self, s: usize) -> Option<DMatrix<T>> {
        let buf = self.sigma.as_ref()?;
        let p = self.dim();
        Some(DMatrix::from_column_slice(p, p, &buf[s * p * p..(s + 1) * p * p]))
    }

    pub fn has_latents(&self) -> bool {
        self.latent_noisy.is_some()
    }

    pub fn has_covariance(&self) -> bool {
        self.sigma.is_some()
    }

    /// Flat column views used by serialization: name, per-draw width, data.
    pub fn columns(&self) -> Vec<(&'static str, usize, &[T])> {
        let mut cols: Vec<(&'static str, usize, &[T])> = SCALAR_NAMES
            .iter()
            .zip(self.scalars.iter())
            .map(|(&n, v)| (n, 1, v.as_slice()))
            .collect();
        let p = self.dim();
        let n_obs = self.n_observations();
        cols.push(("mu", p, &self.mu));
        cols.push(("signals", p * self.n_subjects(), &self.signals));
        if let Some(b) = &self.latent_noisy {
            cols.push(("latent_noisy", n_obs, b));
        }
        if let Some(b) = &self.pg {
            cols.push(("pg", n_obs, b));
        }
        if let Some(b) = &self.sigma {
            cols.push(("sigma", p * p, b));
        }
        cols
    }

    /// Inverse of [`columns`](Self::columns).
    pub fn from_columns(
        meta: DrawsMeta,
        subject_ids: Vec<String>,
        subject_grids: Vec<TimeGrid<T>>,
        n_draws: usize,
        mut cols: Vec<(String, Vec<T>)>,
    ) -> Result<Self> {
        let mut take = |name: &str| -> Option<Vec<T>> {
            let k = cols.iter().position(|(n, _)| n == name)?;
            Some(cols.swap_remove(k).1)
        };
        let mut scalars: [Vec<T>; 5] = Default::default();
        for (k, name) in SCALAR_NAMES.iter().enumerate() {
            scalars[k] = take(name).ok_or_else(|| Error::Format(format!("missing column {name}")))?;
        }
        let mu = take("mu").ok_or_else(|| Error::Format("missing column mu".into()))?;
        let signals = take("signals").ok_or_else(|| Error::Format("missing column signals".into()))?;
        let latent_noisy = take("latent_noisy");
        let pg = take("pg");
        let sigma = take("sigma");
        let mut d = Self::new(
            meta,
            subject_ids,
            subject_grids,
            StoreOptions {
                latents: latent_noisy.is_some(),
                covariance: sigma.is_some(),
            },
        )?;
        let p = d.dim();
        let n = d.n_subjects();
        let n_obs = d.n_observations();
        let ok = scalars.iter().all(|v| v.len() == n_draws)
            && mu.len() == n_draws * p
            && signals.len() == n_draws * p * n
            && latent_noisy.as_ref().is_none_or(|v| v.len() == n_draws * n_obs)
            && pg.as_ref().is_none_or(|v| v.len() == n_draws * n_obs)
            && sigma.as_ref().is_none_or(|v| v.len() == n_draws * p * p);
        if !ok {
            return Err(Error::Format("column lengths disagree with draw count".into()));
        }
        d.n_draws = n_draws;
        d.scalars = scalars;
        d.mu = mu;
        d.signals = signals;
        d.latent_noisy = latent_noisy;
        d.pg = pg;
        d.sigma = sigma;
        Ok(d)
    }
}
