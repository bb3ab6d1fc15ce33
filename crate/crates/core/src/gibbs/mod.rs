//! Nine-step Gibbs sampler for the binary model.
//!
//! One sweep updates, in order: the noisy latents, the Pólya-Gamma
//! auxiliaries, the noise variance, the pooled-grid signals, the
//! normal-inverse-Wishart block `(Σ, μ)`, `μ0`, `σ²`, `ρ` (griddy) and `ν`
//! (griddy). Every update is an exact draw from its full conditional.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, PooledGrid};
use crate::error::{Error, Result};
use crate::kernels::{correlation_matrix, matern52_correlation};
use crate::linalg::{cholesky_spd, cholesky_with_jitter, ln_det, submatrix, subvector, symmetrize, trace_of_product, Chol};
use crate::prior::PriorConfig;
use crate::randdist::{
    chain_rng, sample_gamma, sample_invgamma, sample_invwishart_std, sample_log_categorical, sample_mvn_chol,
    sample_mvn_precision, sample_pg1, std_normal, substream,
};
use crate::scalar::{expit, ln_mvgamma, Real};
use crate::state::{ChainState, DrawsMeta, MeanModel, PosteriorDraws, StoreOptions};

fn default_grid_size() -> usize {
    100
}

/// Starting point of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Signals at shrunken empirical logits, scale matched to their spread.
    #[default]
    Empirical,
    /// Prior-centered start with every signal at `μ0·1`.
    Prior,
}

/// Chain length, storage and seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of griddy-Gibbs points for `ρ` and `ν`.
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Keep per-draw noisy latents and Pólya-Gamma variables.
    #[serde(default)]
    pub store_latents: bool,
    /// Keep the per-draw pooled-grid covariance `Σ`.
    #[serde(default)]
    pub store_covariance: bool,
    #[serde(default)]
    pub mean_model: MeanModel,
    #[serde(default)]
    pub init: InitStrategy,
}

impl SamplerConfig {
    pub fn new(total_iterations: usize, burn_in: usize, thinning: usize, seed: u64) -> Self {
        Self {
            total_iterations,
            burn_in,
            thinning,
            seed,
            grid_size: default_grid_size(),
            store_latents: false,
            store_covariance: false,
            mean_model: MeanModel::Hierarchical,
            init: InitStrategy::Empirical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_iterations {
            return Err(Error::InvalidParameter("burn_in must be below total_iterations".into()));
        }
        if self.thinning < 1 {
            return Err(Error::InvalidParameter("thinning must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidParameter("grid_size must be at least 2".into()));
        }
        Ok(())
    }

    /// Whether iteration `it` (0-based) is stored.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it + 1 - self.burn_in) % self.thinning == 0
    }

    pub fn n_stored(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thinning
    }
}

/// Midpoint grid of `g` points on `(a, b)`: `a + (l + ½)(b − a)/g`.
pub fn griddy_points(a: f64, b: f64, g: usize) -> Vec<f64> {
    let h = (b - a) / g as f64;
    (0..g).map(|l| a + (l as f64 + 0.5) * h).collect()
}

/// Factorization of the current `Σ` shared by the steps that need `Σ⁻¹`.
#[derive(Debug, Clone)]
pub struct SigmaFactors<T: Real> {
    pub chol: Chol<T>,
    /// `Q = Σ⁻¹`.
    pub precision: DMatrix<T>,
    pub ln_det: T,
}

impl<T: Real> SigmaFactors<T> {
    pub fn new(sigma: &DMatrix<T>) -> Result<Self> {
        let chol = cholesky_spd(sigma.clone(), "signal covariance")?;
        let mut precision = chol.inverse();
        symmetrize(&mut precision);
        let ln_det = ln_det(&chol);
        Ok(Self { chol, precision, ln_det })
    }
}

/// Full-conditional parameters of the `(Σ, μ)` block.
#[derive(Debug, Clone)]
pub struct NiwPosterior<T: Real> {
    pub scale: DMatrix<T>,
    /// Shape in the `ν` parameterization (mean `scale/(shape − 2)`).
    pub shape: T,
    /// `(μ*, κ*)` under the hierarchical mean.
    pub mean: Option<(DVector<T>, T)>,
}

/// Per-step labels used in error messages and timing tables.
pub const STEP_NAMES: [&str; 9] = [
    "latent_noisy",
    "polya_gamma",
    "noise_var",
    "signals",
    "mean_covariance",
    "mu0",
    "sigma2",
    "rho",
    "nu",
];

/// Sampler bound to one dataset, with the caches that depend only on the
/// pooled grid and the priors.
#[derive(Debug, Clone)]
pub struct GibbsSampler<T: Real> {
    pooled: PooledGrid<T>,
    /// `Y − ½` per subject.
    lambda: Vec<DVector<T>>,
    priors: PriorConfig<T>,
    cfg: SamplerConfig,
    rho_grid: Vec<T>,
    rho_corr: Vec<DMatrix<T>>,
    rho_ln_det: Vec<f64>,
    nu_grid: Vec<T>,
    /// `ln Γ_p((g + p − 1)/2)` per ν grid point.
    nu_ln_mvgamma: Vec<f64>,
}

impl<T: Real> GibbsSampler<T> {
    pub fn new(ds: &BinaryDataset<T>, priors: &PriorConfig<T>, cfg: &SamplerConfig) -> Result<Self> {
        priors.validate()?;
        cfg.validate()?;
        let pooled = ds.pooled().clone();
        let p = pooled.len();
        let g = cfg.grid_size;
        let rho_grid: Vec<T> = griddy_points(priors.a_rho.f64(), priors.b_rho.f64(), g)
            .into_iter()
            .map(T::lit)
            .collect();
        let mut rho_corr = Vec::with_capacity(g);
        let mut rho_ln_det = Vec::with_capacity(g);
        for &r in &rho_grid {
            let m = correlation_matrix(pooled.times(), r);
            let chol = cholesky_with_jitter(m.clone(), T::one(), "correlation matrix on range grid")?;
            rho_ln_det.push(ln_det(&chol).f64());
            rho_corr.push(m);
        }
        let nu_grid: Vec<T> = griddy_points(priors.a_nu.f64(), priors.b_nu.f64(), g)
            .into_iter()
            .map(T::lit)
            .collect();
        let nu_ln_mvgamma = nu_grid
            .iter()
            .map(|&v| ln_mvgamma(p, 0.5 * (v.f64() + p as f64 - 1.0)))
            .collect();
        let lambda = ds
            .subjects()
            .iter()
            .map(|s| DVector::from_iterator(s.responses.len(), s.responses.iter().map(|&y| T::lit(y as f64 - 0.5))))
            .collect();
        Ok(Self {
            pooled,
            lambda,
            priors: *priors,
            cfg: cfg.clone(),
            rho_grid,
            rho_corr,
            rho_ln_det,
            nu_grid,
            nu_ln_mvgamma,
        })
    }

    pub fn pooled(&self) -> &PooledGrid<T> {
        &self.pooled
    }

    pub fn priors(&self) -> &PriorConfig<T> {
        &self.priors
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn rho_grid(&self) -> &[T] {
        &self.rho_grid
    }

    pub fn nu_grid(&self) -> &[T] {
        &self.nu_grid
    }

    fn n(&self) -> usize {
        self.lambda.len()
    }

    fn p(&self) -> usize {
        self.pooled.len()
    }

    /// Replaces the binary responses (same grids). Used by data-regenerating
    /// correctness tests.
    pub fn set_responses(&mut self, responses: &[Vec<u8>]) -> Result<()> {
        if responses.len() != self.n()
            || responses.iter().zip(&self.lambda).any(|(y, l)| y.len() != l.len())
        {
            return Err(Error::DimensionMismatch("replacement responses do not match grids".into()));
        }
        for (l, y) in self.lambda.iter_mut().zip(responses) {
            for (v, &b) in l.iter_mut().zip(y) {
                *v = T::lit(b as f64 - 0.5);
            }
        }
        Ok(())
    }

    /// Correlation matrix `R_ρ` and `ln|R_ρ|` for the given range, from the
    /// grid cache when `ρ` is a grid point.
    fn correlation(&self, rho: T) -> Result<(DMatrix<T>, f64)> {
        if let Some(k) = self.rho_grid.iter().position(|&r| r == rho) {
            return Ok((self.rho_corr[k].clone(), self.rho_ln_det[k]));
        }
        let m = correlation_matrix(self.pooled.times(), rho);
        let chol = cholesky_with_jitter(m.clone(), T::one(), "correlation matrix")?;
        Ok((m, ln_det(&chol).f64()))
    }

    /// Prior-centered starting state.
    pub fn init_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState<T>> {
        let pr = &self.priors;
        let two = T::lit(2.0);
        let p = self.p();
        let sigma2 = pr.a_sigma / pr.b_sigma;
        let rho = (pr.a_rho + pr.b_rho) / two;
        let nu = (pr.a_nu + pr.b_nu) / two;
        let mu0 = pr.a_mu;
        let (corr, _) = self.correlation(rho)?;
        let sigma = corr * (sigma2 / (nu - two));
        let mu = DVector::from_element(p, mu0);
        let signals = vec![mu.clone(); self.n()];
        let latent_noisy: Vec<DVector<T>> = (0..self.n())
            .map(|i| subvector(&mu, self.pooled.observed(i)))
            .collect();
        let pg = latent_noisy
            .iter()
            .map(|z| DVector::from_fn(z.len(), |_, _| sample_pg1(T::zero(), rng)))
            .collect();
        Ok(ChainState {
            latent_noisy,
            pg,
            signals,
            mu,
            sigma,
            noise_var: pr.noise_var_center(),
            mu0,
            sigma2,
            rho,
            nu,
        })
    }

    /// Data-informed start. Signals sit at the pooled empirical logit of each
    /// time plus the subject's own deviation from it (its mean deviation at
    /// unobserved times); `μ` is their average, `v` the across-subject
    /// variance and `Σ = v·R_ρ`. `ν` is the grid point closest to
    /// `3 + spread(μ)/v`, so that `(ν−3)Σ` matches the spread of `μ`, and
    /// `σ² = (ν−2)v` so that `E[Σ] = Ψ_φ/(ν−2)` matches.
    pub fn init_state_empirical<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState<T>> {
        let mut st = self.init_state(rng)?;
        let p = self.p();
        let n = self.n();
        let half = T::lit(0.5);
        let logit = |q: T| (q / (T::one() - q)).ln();
        let mut succ = vec![T::zero(); p];
        let mut count = vec![T::zero(); p];
        for i in 0..n {
            for (t, &k) in self.pooled.observed(i).iter().enumerate() {
                succ[k] += self.lambda[i][t] + half;
                count[k] += T::one();
            }
        }
        let base: Vec<T> = (0..p).map(|k| logit((succ[k] + half) / (count[k] + T::one()))).collect();
        let point = logit(T::lit(0.75));
        for i in 0..n {
            let obs = self.pooled.observed(i);
            let mut z = DVector::from_vec(base.clone());
            let mut dev_sum = T::zero();
            for (t, &k) in obs.iter().enumerate() {
                let target = if self.lambda[i][t] > T::zero() { point } else { -point };
                let dev = target - base[k];
                z[k] += dev;
                dev_sum += dev;
            }
            let dev_mean = dev_sum / T::of_usize(obs.len());
            for &k in self.pooled.unobserved(i) {
                z[k] += dev_mean;
            }
            st.latent_noisy[i] = subvector(&z, obs);
            st.signals[i] = z;
        }
        st.mu = self.signal_mean(&st);
        st.mu0 = st.mu.mean();
        let pf = T::of_usize(p);
        let spread = st.mu.iter().map(|&m| (m - st.mu0) * (m - st.mu0)).fold(T::zero(), |a, b| a + b) / pf;
        let mut within = T::zero();
        for z in &st.signals {
            within += (z - &st.mu).norm_squared();
        }
        let within = within / (pf * T::of_usize(n));
        let v = within.max(T::lit(1e-6));
        let target = T::lit(3.0) + spread / v;
        st.nu = self
            .nu_grid
            .iter()
            .copied()
            .min_by(|a, b| (*a - target).abs().partial_cmp(&(*b - target).abs()).unwrap())
            .expect("nonempty grid");
        st.sigma2 = (st.nu - T::lit(2.0)) * v;
        st.sigma = self.correlation(st.rho)?.0 * v;
        for (xi, z) in st.pg.iter_mut().zip(&st.latent_noisy) {
            for (x, &c) in xi.iter_mut().zip(z.iter()) {
                *x = sample_pg1(c, rng);
            }
        }
        Ok(st)
    }

    /// Starting state under the configured strategy.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChainState<T>> {
        let mut st = match self.cfg.init {
            InitStrategy::Prior => self.init_state(rng)?,
            InitStrategy::Empirical => self.init_state_empirical(rng)?,
        };
        if self.cfg.mean_model == MeanModel::Constant {
            st.mu = DVector::from_element(self.p(), st.mu0);
        }
        Ok(st)
    }

    /// Step 1: `𝒵ᵢₜ ∼ N(V(λᵢₜ + Zᵢₜ/σε²), V)`, `V = 1/(ξᵢₜ + 1/σε²)`.
    pub fn step1_update_latent_noisy<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, rng: &mut R) {
        let inv_noise = T::one() / st.noise_var;
        for i in 0..self.n() {
            let obs = self.pooled.observed(i);
            for (t, &k) in obs.iter().enumerate() {
                let v = T::one() / (st.pg[i][t] + inv_noise);
                let m = v * (self.lambda[i][t] + st.signals[i][k] * inv_noise);
                st.latent_noisy[i][t] = m + v.sqrt() * T::lit(std_normal(rng));
            }
        }
    }

    /// Step 2: `ξᵢₜ ∼ PG(1, 𝒵ᵢₜ)`.
    pub fn step2_update_pg<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, rng: &mut R) {
        for (xi, z) in st.pg.iter_mut().zip(&st.latent_noisy) {
            for (x, &c) in xi.iter_mut().zip(z.iter()) {
                *x = sample_pg1(c, rng);
            }
        }
    }

    /// Step 3: `σε² ∼ IG(a_ε + N/2, b_ε + Σ(𝒵 − Z)²/2)`.
    pub fn step3_update_noise_var<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, rng: &mut R) -> Result<()> {
        let (shape, scale) = self.noise_posterior(st);
        st.noise_var = sample_invgamma(shape, scale, rng)?;
        Ok(())
    }

    /// Inverse-gamma shape and scale of the noise-variance full conditional.
    pub fn noise_posterior(&self, st: &ChainState<T>) -> (T, T) {
        let half = T::lit(0.5);
        let mut ss = T::zero();
        let mut count = 0usize;
        for i in 0..self.n() {
            for (t, &k) in self.pooled.observed(i).iter().enumerate() {
                let r = st.latent_noisy[i][t] - st.signals[i][k];
                ss += r * r;
                count += 1;
            }
        }
        (self.priors.a_eps + half * T::of_usize(count), self.priors.b_eps + half * ss)
    }

    /// Step 4: pooled-grid signals. For each subject, first the unobserved
    /// block given the observed block (Gaussian conditional under `N(μ, Σ)`),
    /// then the observed block given the unobserved block and `𝒵ᵢ`.
    ///
    /// Subjects are processed in parallel on substreams of `key`.
    pub fn step4_update_signals(&self, st: &mut ChainState<T>, f: &SigmaFactors<T>, key: u64) -> Result<()> {
        let q = &f.precision;
        let mu = &st.mu;
        let inv_noise = T::one() / st.noise_var;
        let latents = &st.latent_noisy;
        let updated: Vec<Result<DVector<T>>> = st
            .signals
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let mut rng = substream(key, i as u64);
                self.update_one_signal(i, z, &latents[i], mu, q, inv_noise, &mut rng)
            })
            .collect();
        for (z, new) in st.signals.iter_mut().zip(updated) {
            *z = new?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn update_one_signal<R: Rng + ?Sized>(
        &self,
        i: usize,
        z: &DVector<T>,
        latent: &DVector<T>,
        mu: &DVector<T>,
        q: &DMatrix<T>,
        inv_noise: T,
        rng: &mut R,
    ) -> Result<DVector<T>> {
        let obs = self.pooled.observed(i);
        let un = self.pooled.unobserved(i);
        let mut out = z.clone();
        let mu_o = subvector(mu, obs);
        let q_oo = submatrix(q, obs, obs);

        let mut canon = latent * inv_noise + &q_oo * &mu_o;
        if !un.is_empty() {
            let mu_u = subvector(mu, un);
            let q_uu = submatrix(q, un, un);
            let q_uo = submatrix(q, un, obs);
            let chol_uu = cholesky_spd(q_uu.clone(), "unobserved-block precision")?;
            let z_o = subvector(z, obs);
            let b_u = &q_uu * &mu_u - &q_uo * (z_o - &mu_o);
            let z_u = sample_mvn_precision(&chol_uu, &b_u, rng);
            canon -= q_uo.transpose() * (&z_u - &mu_u);
            for (a, &k) in un.iter().enumerate() {
                out[k] = z_u[a];
            }
        }
        let mut prec = q_oo;
        for d in 0..prec.nrows() {
            prec[(d, d)] += inv_noise;
        }
        let chol = cholesky_spd(prec, "observed-block precision")?;
        let z_o = sample_mvn_precision(&chol, &canon, rng);
        for (a, &k) in obs.iter().enumerate() {
            out[k] = z_o[a];
        }
        Ok(out)
    }

    fn scale_matrix(&self, st: &ChainState<T>) -> Result<DMatrix<T>> {
        Ok(self.correlation(st.rho)?.0 * st.sigma2)
    }

    fn signal_mean(&self, st: &ChainState<T>) -> DVector<T> {
        let p = self.p();
        let sum = st.signals.iter().fold(DVector::zeros(p), |a, z| a + z);
        sum / T::of_usize(self.n())
    }

    /// Parameters of the `(Σ, μ)` full conditional: the inverse-Wishart scale
    /// `Ψ*`, its shape `ν*` (standard df `ν* + p − 1`), and, for the
    /// hierarchical mean, `μ*` and `κ* = n + κ`.
    pub fn niw_posterior(&self, st: &ChainState<T>) -> Result<NiwPosterior<T>> {
        let p = self.p();
        let n = T::of_usize(self.n());
        let mut psi = self.scale_matrix(st)?;
        let ones = DVector::from_element(p, T::one());
        let mean = match self.cfg.mean_model {
            MeanModel::Hierarchical => {
                let zbar = self.signal_mean(st);
                for z in &st.signals {
                    let d = z - &zbar;
                    psi.ger(T::one(), &d, &d, T::one());
                }
                let kappa = st.kappa();
                let d = &zbar - &ones * st.mu0;
                psi.ger(n * kappa / (n + kappa), &d, &d, T::one());
                let m = (&ones * (kappa * st.mu0) + &zbar * n) / (kappa + n);
                Some((m, n + kappa))
            }
            MeanModel::Constant => {
                for z in &st.signals {
                    let d = z - &ones * st.mu0;
                    psi.ger(T::one(), &d, &d, T::one());
                }
                None
            }
        };
        symmetrize(&mut psi);
        Ok(NiwPosterior {
            scale: psi,
            shape: n + st.nu,
            mean,
        })
    }

    /// Step 5: `Σ ∼ IW(n + ν, Ψ*)` then `μ | Σ ∼ N(μ*, Σ/(n + κ))`.
    /// Under the constant-mean model only `Σ` is drawn.
    pub fn step5_update_niw<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, rng: &mut R) -> Result<()> {
        let post = self.niw_posterior(st)?;
        let pf = T::of_usize(self.p());
        let chol = cholesky_with_jitter(post.scale, st.sigma2, "posterior inverse-Wishart scale")?;
        st.sigma = sample_invwishart_std(post.shape + pf - T::one(), &chol, rng)?;
        st.mu = match post.mean {
            Some((m, k)) => {
                let c = cholesky_spd(&st.sigma / k, "mean covariance")?;
                sample_mvn_chol(&m, &c, rng)
            }
            None => DVector::from_element(self.p(), st.mu0),
        };
        Ok(())
    }

    /// Normal full conditional of `μ0` as (mean, variance).
    pub fn mu0_posterior(&self, st: &ChainState<T>, f: &SigmaFactors<T>) -> (T, T) {
        let pr = &self.priors;
        let q = &f.precision;
        let one_q = q.row_sum_tr();
        let one_q_one = one_q.sum();
        let (prec, canon) = match self.cfg.mean_model {
            MeanModel::Hierarchical => {
                let s = st.nu - T::lit(3.0);
                (one_q_one / s + T::one() / pr.b_mu, one_q.dot(&st.mu) / s + pr.a_mu / pr.b_mu)
            }
            MeanModel::Constant => {
                let p = self.p();
                let sum = st.signals.iter().fold(DVector::zeros(p), |a, z| a + z);
                (T::of_usize(self.n()) * one_q_one + T::one() / pr.b_mu, one_q.dot(&sum) + pr.a_mu / pr.b_mu)
            }
        };
        let var = T::one() / prec;
        (var * canon, var)
    }

    /// Step 6: `μ0 ∼ N(a*, b*)` with the prior `μ | Σ ∼ N(μ0·1, (ν−3)Σ)`.
    pub fn step6_update_mu0<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, f: &SigmaFactors<T>, rng: &mut R) {
        let (m, v) = self.mu0_posterior(st, f);
        st.mu0 = m + v.sqrt() * T::lit(std_normal(rng));
        if self.cfg.mean_model == MeanModel::Constant {
            st.mu = DVector::from_element(self.p(), st.mu0);
        }
    }

    /// Gamma (shape, rate) full conditional of `σ²`.
    pub fn sigma2_posterior(&self, st: &ChainState<T>, f: &SigmaFactors<T>) -> Result<(T, T)> {
        let pf = T::of_usize(self.p());
        let half = T::lit(0.5);
        let (corr, _) = self.correlation(st.rho)?;
        let shape = self.priors.a_sigma + (st.nu + pf - T::one()) * pf * half;
        let rate = self.priors.b_sigma + half * trace_of_product(&corr, &f.precision);
        Ok((shape, rate))
    }

    /// Step 7: `σ² ∼ Gamma(a_σ + (ν+p−1)p/2, b_σ + tr(R_ρ Σ⁻¹)/2)`.
    pub fn step7_update_sigma2<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, f: &SigmaFactors<T>, rng: &mut R) -> Result<()> {
        let (shape, rate) = self.sigma2_posterior(st, f)?;
        st.sigma2 = sample_gamma(shape, rate, rng)?;
        Ok(())
    }

    /// Unnormalized log-weights of the `ρ` grid.
    pub fn rho_log_weights(&self, st: &ChainState<T>, f: &SigmaFactors<T>) -> Vec<f64> {
        let p = self.p() as f64;
        let df = st.nu.f64() + p - 1.0;
        let s2 = st.sigma2.f64();
        let ln_s2 = s2.ln();
        self.rho_corr
            .iter()
            .zip(&self.rho_ln_det)
            .map(|(r, &ld)| {
                0.5 * df * (p * ln_s2 + ld) - 0.5 * s2 * trace_of_product(r, &f.precision).f64()
            })
            .collect()
    }

    /// Step 8: griddy-Gibbs draw of `ρ`.
    pub fn step8_update_rho<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, f: &SigmaFactors<T>, rng: &mut R) -> Result<()> {
        let w = self.rho_log_weights(st, f);
        st.rho = self.rho_grid[sample_log_categorical(&w, rng)?];
        Ok(())
    }

    /// Unnormalized log-weights of the `ν` grid.
    pub fn nu_log_weights(&self, st: &ChainState<T>, f: &SigmaFactors<T>) -> Result<Vec<f64>> {
        let p = self.p();
        let pf = p as f64;
        let (corr, ln_det_corr) = self.correlation(st.rho)?;
        let s2 = st.sigma2.f64();
        let ln_det_psi = pf * s2.ln() + ln_det_corr;
        let ln_det_sigma = f.ln_det.f64();
        let tr = s2 * trace_of_product(&corr, &f.precision).f64();
        let quad = match self.cfg.mean_model {
            MeanModel::Hierarchical => {
                let d = &st.mu - DVector::from_element(p, st.mu0);
                Some((&f.precision * &d).dot(&d).f64())
            }
            MeanModel::Constant => None,
        };
        Ok(self
            .nu_grid
            .iter()
            .zip(&self.nu_ln_mvgamma)
            .map(|(&g, &lg)| {
                let g = g.f64();
                let df = g + pf - 1.0;
                let iw = 0.5 * df * ln_det_psi
                    - 0.5 * df * pf * std::f64::consts::LN_2
                    - lg
                    - 0.5 * (df + pf + 1.0) * ln_det_sigma
                    - 0.5 * tr;
                let normal = quad.map_or(0.0, |qf| -0.5 * pf * (g - 3.0).ln() - 0.5 * qf / (g - 3.0));
                iw + normal
            })
            .collect())
    }

    /// Step 9: griddy-Gibbs draw of `ν` (and thereby `κ`).
    pub fn step9_update_nu<R: Rng + ?Sized>(&self, st: &mut ChainState<T>, f: &SigmaFactors<T>, rng: &mut R) -> Result<()> {
        let w = self.nu_log_weights(st, f)?;
        st.nu = self.nu_grid[sample_log_categorical(&w, rng)?];
        Ok(())
    }

    /// One full sweep of steps 1 to 9. `timings`, when given, accumulates
    /// seconds per step.
    pub fn sweep<R: RngCore>(&self, st: &mut ChainState<T>, rng: &mut R, mut timings: Option<&mut [f64; 9]>) -> Result<()> {
        let mut clock = Instant::now();
        let mut lap = |k: usize, timings: &mut Option<&mut [f64; 9]>| {
            if let Some(t) = timings.as_deref_mut() {
                let now = Instant::now();
                t[k] += (now - clock).as_secs_f64();
                clock = now;
            }
        };
        self.step1_update_latent_noisy(st, rng);
        lap(0, &mut timings);
        self.step2_update_pg(st, rng);
        lap(1, &mut timings);
        self.step3_update_noise_var(st, rng).map_err(|e| e.in_step(STEP_NAMES[2]))?;
        lap(2, &mut timings);
        let f = SigmaFactors::new(&st.sigma).map_err(|e| e.in_step(STEP_NAMES[3]))?;
        let key = rng.next_u64();
        self.step4_update_signals(st, &f, key).map_err(|e| e.in_step(STEP_NAMES[3]))?;
        lap(3, &mut timings);
        self.step5_update_niw(st, rng).map_err(|e| e.in_step(STEP_NAMES[4]))?;
        let f = SigmaFactors::new(&st.sigma).map_err(|e| e.in_step(STEP_NAMES[4]))?;
        lap(4, &mut timings);
        self.step6_update_mu0(st, &f, rng);
        lap(5, &mut timings);
        self.step7_update_sigma2(st, &f, rng).map_err(|e| e.in_step(STEP_NAMES[6]))?;
        lap(6, &mut timings);
        self.step8_update_rho(st, &f, rng).map_err(|e| e.in_step(STEP_NAMES[7]))?;
        lap(7, &mut timings);
        self.step9_update_nu(st, &f, rng).map_err(|e| e.in_step(STEP_NAMES[8]))?;
        lap(8, &mut timings);
        Ok(())
    }

    /// Runs the configured chain from the prior-centered start.
    pub fn run(&self, subject_ids: Vec<String>) -> Result<PosteriorDraws<T>> {
        let cfg = &self.cfg;
        let mut rng = chain_rng(cfg.seed);
        let start = Instant::now();
        let mut st = self.initial_state(&mut rng)?;
        let grids = (0..self.n())
            .map(|i| {
                let t: Vec<T> = self.pooled.observed(i).iter().map(|&k| self.pooled.times()[k]).collect();
                crate::data::TimeGrid::new(t)
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = DrawsMeta {
            seed: cfg.seed,
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
            total_iterations: cfg.total_iterations,
            grid_size: cfg.grid_size,
            mean_model: cfg.mean_model,
            step_seconds: vec![0.0; 9],
            total_seconds: 0.0,
        };
        let store = StoreOptions {
            latents: cfg.store_latents,
            covariance: cfg.store_covariance,
        };
        let mut draws = PosteriorDraws::new(meta, subject_ids, grids, store)?;
        let mut timings = [0.0; 9];
        for it in 0..cfg.total_iterations {
            self.sweep(&mut st, &mut rng, Some(&mut timings))?;
            if cfg.keeps(it) {
                draws.push(&st);
            }
        }
        draws.meta.step_seconds = timings.to_vec();
        draws.meta.total_seconds = start.elapsed().as_secs_f64();
        Ok(draws)
    }
}

/// Fits the binary model: builds the sampler and runs one chain.
pub fn run_chain<T: Real>(ds: &BinaryDataset<T>, priors: &PriorConfig<T>, cfg: &SamplerConfig) -> Result<PosteriorDraws<T>> {
    let ids = ds.subjects().iter().map(|s| s.id.clone()).collect();
    GibbsSampler::new(ds, priors, cfg)?.run(ids)
}

fn ln_normal(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * (x - m) * (x - m) / v
}

/// Unnormalized joint log-posterior of the binary model at `st` (Pólya-Gamma
/// variables integrated out; hyperpriors included; `ρ` and `ν` treated as
/// continuous uniforms).
pub fn log_joint_density<T: Real>(
    ds: &BinaryDataset<T>,
    priors: &PriorConfig<T>,
    st: &ChainState<T>,
    mean_model: MeanModel,
) -> Result<f64> {
    let pooled = ds.pooled();
    let mut lp = 0.0;
    for (i, s) in ds.subjects().iter().enumerate() {
        for (t, &k) in pooled.observed(i).iter().enumerate() {
            lp += log_observation_density(s.responses[t], st.latent_noisy[i][t], st.signals[i][k], st.noise_var);
        }
    }
    Ok(lp + log_prior_density(pooled.times(), priors, st, mean_model)?)
}

/// `ln Bern(y | expit(𝒵)) + ln N(𝒵 | Z, σε²)` for one observation.
pub fn log_observation_density<T: Real>(y: u8, zeta: T, z: T, noise_var: T) -> f64 {
    let pr = expit(zeta).f64();
    let ll = if y == 1 { pr.ln() } else { (1.0 - pr).ln() };
    ll + ln_normal(zeta.f64(), z.f64(), noise_var.f64())
}

/// Log-density of everything above the latent noisy process: signals given
/// `(μ, Σ)`, the mean, the covariance and the hyperpriors.
pub fn log_prior_density<T: Real>(
    pooled_times: &[T],
    priors: &PriorConfig<T>,
    st: &ChainState<T>,
    mean_model: MeanModel,
) -> Result<f64> {
    let p = pooled_times.len();
    let pf = p as f64;
    let noise = st.noise_var.f64();
    let mut lp = 0.0;
    let f = SigmaFactors::new(&st.sigma)?;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let ld = f.ln_det.f64();
    for z in &st.signals {
        let d = z - &st.mu;
        lp += -0.5 * pf * ln2pi - 0.5 * ld - 0.5 * (&f.precision * &d).dot(&d).f64();
    }
    let nu = st.nu.f64();
    if mean_model == MeanModel::Hierarchical {
        let d = &st.mu - DVector::from_element(p, st.mu0);
        let s = nu - 3.0;
        lp += -0.5 * pf * ln2pi - 0.5 * (pf * s.ln() + ld) - 0.5 * (&f.precision * &d).dot(&d).f64() / s;
    }
    let psi = correlation_matrix(pooled_times, st.rho) * st.sigma2;
    let psi_chol = cholesky_with_jitter(psi.clone(), st.sigma2, "prior scale")?;
    lp += crate::randdist::invwishart_logpdf(nu + pf - 1.0, &psi_chol, &psi, &f.chol);

    let pr = priors;
    lp += ln_normal(st.mu0.f64(), pr.a_mu.f64(), pr.b_mu.f64());
    let (a, b, x) = (pr.a_sigma.f64(), pr.b_sigma.f64(), st.sigma2.f64());
    lp += a * b.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * x.ln() - b * x;
    let (a, b) = (pr.a_eps.f64(), pr.b_eps.f64());
    lp += a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * noise.ln() - b / noise;
    let in_support = st.rho > pr.a_rho && st.rho < pr.b_rho && st.nu > pr.a_nu && st.nu < pr.b_nu;
    if !in_support {
        return Ok(f64::NEG_INFINITY);
    }
    lp -= (pr.b_rho - pr.a_rho).f64().ln() + (pr.b_nu - pr.a_nu).f64().ln();
    Ok(lp)
}

/// Matérn-5/2 correlation at a single distance, exposed for callers that
/// build kernels on arbitrary point sets.
pub fn kernel_correlation<T: Real>(d: T, rho: T) -> T {
    matern52_correlation(d / rho)
}
