//! Synthetic longitudinal binary data: `Y ∼ Bern(η(f(τ) + ω(τ) + ε))` with
//! a deterministic signal `f`, a zero-mean subject process `ω` and white
//! noise `ε`, followed by uniform dropout.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinaryDataset, BinarySubject, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::sqrtm_psd;
use crate::randdist::{chain_rng, sample_chisq, standard_normal_vector, std_normal, ChainRng};
use crate::scalar::{expit, norm_cdf};

/// Response link `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Expit,
    Probit,
}

impl Link {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Expit => expit(x),
            Link::Probit => norm_cdf(x),
        }
    }
}

/// `f(τ) = offset + sin_amp·sin(sin_freq·τ) + cos_amp·cos(cos_freq·τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalFn {
    pub offset: f64,
    pub sin_amp: f64,
    pub sin_freq: f64,
    pub cos_amp: f64,
    pub cos_freq: f64,
}

impl SignalFn {
    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.sin_amp * (self.sin_freq * t).sin() + self.cos_amp * (self.cos_freq * t).cos()
    }

    /// `0.3 + 3 sin(τ/2) + cos(τ/3)`.
    pub fn mean_case1() -> Self {
        Self {
            offset: 0.3,
            sin_amp: 3.0,
            sin_freq: 0.5,
            cos_amp: 1.0,
            cos_freq: 1.0 / 3.0,
        }
    }

    /// `0.1 + 2 sin(τ/4) + cos(τ/4)`.
    pub fn mean_case2() -> Self {
        Self {
            offset: 0.1,
            sin_amp: 2.0,
            sin_freq: 0.25,
            cos_amp: 1.0,
            cos_freq: 0.25,
        }
    }

    /// `0.1 + 2 sin(τ/2) + cos(τ/2)`, used by the covariance scenarios.
    pub fn covariance_study() -> Self {
        Self {
            offset: 0.1,
            sin_amp: 2.0,
            sin_freq: 0.5,
            cos_amp: 1.0,
            cos_freq: 0.5,
        }
    }
}

/// Stationary covariance kernels for `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `variance · exp(−d² / (2·length²))`.
    SquaredExponential { variance: f64, length: f64 },
    /// `variance · exp(−d / range)`.
    Exponential { variance: f64, range: f64 },
    /// `diagonal` at `d = 0`, `off_diagonal` elsewhere.
    CompoundSymmetry { diagonal: f64, off_diagonal: f64 },
    /// Weighted sum of kernels.
    Mixture { weights: Vec<f64>, kernels: Vec<Kernel> },
}

impl Kernel {
    pub fn eval(&self, d: f64) -> f64 {
        let d = d.abs();
        match self {
            Kernel::SquaredExponential { variance, length } => variance * (-d * d / (2.0 * length * length)).exp(),
            Kernel::Exponential { variance, range } => variance * (-d / range).exp(),
            Kernel::CompoundSymmetry { diagonal, off_diagonal } => {
                if d == 0.0 {
                    *diagonal
                } else {
                    *off_diagonal
                }
            }
            Kernel::Mixture { weights, kernels } => weights.iter().zip(kernels).map(|(w, k)| w * k.eval(d)).sum(),
        }
    }

    pub fn matrix(&self, times: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(times.len(), times.len(), |a, b| self.eval(times[a] - times[b]))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("kernel: {m}")));
        match self {
            Kernel::SquaredExponential { variance, length } if !(*variance > 0.0 && *length > 0.0) => {
                bad("squared exponential needs positive variance and length")
            }
            Kernel::Exponential { variance, range } if !(*variance > 0.0 && *range > 0.0) => {
                bad("exponential needs positive variance and range")
            }
            Kernel::CompoundSymmetry { diagonal, off_diagonal } if !(*diagonal > 0.0 && off_diagonal.abs() <= *diagonal) => {
                bad("compound symmetry needs diagonal > 0 and |off_diagonal| <= diagonal")
            }
            Kernel::Mixture { weights, kernels } => {
                if weights.len() != kernels.len() || weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) {
                    return bad("mixture needs one nonnegative weight per kernel");
                }
                kernels.iter().try_for_each(Kernel::validate)
            }
            _ => Ok(()),
        }
    }
}

/// Built-in covariance-study kernels, cases 1 to 4.
pub fn builtin_kernel(case: u32) -> Result<Kernel> {
    let exp5 = Kernel::Exponential {
        variance: 1.0,
        range: 5.0,
    };
    let cs = Kernel::CompoundSymmetry {
        diagonal: 1.0,
        off_diagonal: 0.4,
    };
    Ok(match case {
        1 => Kernel::SquaredExponential {
            variance: 1.0,
            length: 3.0,
        },
        2 => exp5,
        3 => cs,
        4 => Kernel::Mixture {
            weights: vec![0.7, 0.3],
            kernels: vec![exp5, cs],
        },
        other => return Err(Error::UnknownKernelCase(other)),
    })
}

/// Built-in kernel `case` evaluated at distance `d ≥ 0`.
pub fn builtin_kernels(case: u32, d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be nonnegative, got {d}")));
    }
    Ok(builtin_kernel(case)?.eval(d))
}

/// Distribution of the subject process `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub kernel: Kernel,
    /// Multivariate t degrees of freedom (covariance parameterization);
    /// Gaussian when absent.
    #[serde(default)]
    pub student_df: Option<f64>,
}

/// One data-generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub link: Link,
    pub signal: SignalFn,
    pub process: ProcessSpec,
}

/// Time points shared by all subjects before dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `0, 1, …, len − 1`.
    Regular { len: usize },
    /// `points` sorted uniform draws on `(lower, upper)`.
    Uniform { points: usize, lower: f64, upper: f64 },
}

fn default_noise_var() -> f64 {
    0.25
}

/// A full simulation scenario. Each subject draws one of `components` with
/// equal probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub components: Vec<Component>,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    pub n_subjects: usize,
    pub grid: GridSpec,
    /// Fraction of all observations removed.
    #[serde(default)]
    pub sparsity: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.components.is_empty() {
            return bad("scenario needs at least one component".into());
        }
        if self.n_subjects == 0 {
            return bad("n_subjects must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must lie in [0, 1), got {}", self.sparsity));
        }
        if !(self.noise_var >= 0.0) {
            return bad(format!("noise_var must be nonnegative, got {}", self.noise_var));
        }
        match self.grid {
            GridSpec::Regular { len } if len == 0 => return bad("grid needs at least one point".into()),
            GridSpec::Uniform { points, lower, upper } if points == 0 || !(upper > lower) => {
                return bad("uniform grid needs points >= 1 and upper > lower".into())
            }
            _ => {}
        }
        for c in &self.components {
            c.process.kernel.validate()?;
            if let Some(df) = c.process.student_df {
                if !(df > 2.0) {
                    return bad(format!("student_df must exceed 2, got {df}"));
                }
            }
        }
        Ok(())
    }

    /// Mean-structure scenario, case 1, 2 or 3 (the equal mixture of 1 and 2).
    pub fn mean_study(case: u32, n_subjects: usize, len: usize, sparsity: f64, seed: u64) -> Result<Self> {
        let c1 = Component {
            link: Link::Expit,
            signal: SignalFn::mean_case1(),
            process: ProcessSpec {
                kernel: Kernel::SquaredExponential {
                    variance: 1.0,
                    length: std::f64::consts::FRAC_1_SQRT_2,
                },
                student_df: None,
            },
        };
        let c2 = Component {
            link: Link::Probit,
            signal: SignalFn::mean_case2(),
            process: ProcessSpec {
                kernel: Kernel::SquaredExponential {
                    variance: 1.0 / 3.0,
                    length: std::f64::consts::FRAC_1_SQRT_2,
                },
                student_df: Some(5.0),
            },
        };
        let components = match case {
            1 => vec![c1],
            2 => vec![c2],
            3 => vec![c1, c2],
            other => return Err(Error::InvalidParameter(format!("mean-study case {other} is not 1, 2 or 3"))),
        };
        Ok(Self {
            components,
            noise_var: default_noise_var(),
            n_subjects,
            grid: GridSpec::Regular { len },
            sparsity,
            seed,
        })
    }

    /// Covariance-structure scenario with built-in kernel `case`; cases 3
    /// and 4 use a multivariate t with 5 degrees of freedom.
    pub fn covariance_study(case: u32, n_subjects: usize, len: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            components: vec![Component {
                link: Link::Expit,
                signal: SignalFn::covariance_study(),
                process: ProcessSpec {
                    kernel: builtin_kernel(case)?,
                    student_df: (case >= 3).then_some(5.0),
                },
            }],
            noise_var: default_noise_var(),
            n_subjects,
            grid: GridSpec::Regular { len },
            sparsity: 0.0,
            seed,
        })
    }
}

/// Generating values on the full grid, before dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    /// Component drawn by each subject.
    pub component: Vec<usize>,
    /// `f` on the grid for each subject's component.
    pub signal: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    /// `η(f + ω + ε)`, the probability that generated each response.
    pub probability: Vec<Vec<f64>>,
    /// `η(f + ω)`.
    pub signal_probability: Vec<Vec<f64>>,
    /// Responses on the full grid.
    pub responses: Vec<Vec<u8>>,
    /// Whether each grid point survived dropout.
    pub kept: Vec<Vec<bool>>,
}

impl GroundTruth {
    /// True covariance kernel of component `c` at distance `d`.
    pub fn kernel_value(scenario: &SimScenario, c: usize, d: f64) -> f64 {
        scenario.components[c].process.kernel.eval(d)
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: BinaryDataset<f64>,
    pub truth: GroundTruth,
}

fn sample_grid(spec: &GridSpec, rng: &mut ChainRng) -> Vec<f64> {
    match *spec {
        GridSpec::Regular { len } => (0..len).map(|t| t as f64).collect(),
        GridSpec::Uniform { points, lower, upper } => loop {
            let mut v: Vec<f64> = (0..points).map(|_| rng.random_range(lower..upper)).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if v.windows(2).all(|w| w[1] - w[0] > 1e-9) && v.iter().all(|&t| t > lower) {
                break v;
            }
        },
    }
}

/// Subject ids `s01, s02, …`, zero-padded so they sort in order.
pub fn subject_id(i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("s{:0width$}", i + 1)
}

/// Generates data and ground truth; fully determined by `scenario.seed`.
pub fn generate(scenario: &SimScenario) -> Result<Simulated> {
    scenario.validate()?;
    let mut rng = chain_rng(scenario.seed);
    let times = sample_grid(&scenario.grid, &mut rng);
    let p = times.len();
    let roots: Vec<DMatrix<f64>> = scenario
        .components
        .iter()
        .map(|c| sqrtm_psd(&c.process.kernel.matrix(&times)))
        .collect();
    let sd = scenario.noise_var.sqrt();
    let n = scenario.n_subjects;
    let n_comp = scenario.components.len();
    let mut truth = GroundTruth {
        times: times.clone(),
        component: Vec::with_capacity(n),
        signal: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        noise: Vec::with_capacity(n),
        probability: Vec::with_capacity(n),
        signal_probability: Vec::with_capacity(n),
        responses: Vec::with_capacity(n),
        kept: vec![vec![true; p]; n],
    };
    for _ in 0..n {
        let c = if n_comp == 1 { 0 } else { rng.random_range(0..n_comp) };
        let comp = &scenario.components[c];
        let e: DVector<f64> = standard_normal_vector(p, &mut rng);
        let mut omega = &roots[c] * e;
        if let Some(df) = comp.process.student_df {
            omega *= ((df - 2.0) / sample_chisq(df, &mut rng)).sqrt();
        }
        let f: Vec<f64> = times.iter().map(|&t| comp.signal.eval(t)).collect();
        let eps: Vec<f64> = (0..p).map(|_| sd * std_normal(&mut rng)).collect();
        let prob: Vec<f64> = (0..p).map(|k| comp.link.apply(f[k] + omega[k] + eps[k])).collect();
        let y: Vec<u8> = prob.iter().map(|&q| u8::from(rng.random::<f64>() < q)).collect();
        truth.signal_probability.push((0..p).map(|k| comp.link.apply(f[k] + omega[k])).collect());
        truth.component.push(c);
        truth.signal.push(f);
        truth.omega.push(omega.iter().copied().collect());
        truth.noise.push(eps);
        truth.probability.push(prob);
        truth.responses.push(y);
    }
    apply_dropout(&mut truth.kept, scenario.sparsity, &mut rng);
    let subjects = (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..p).filter(|&k| truth.kept[i][k]).collect();
            Ok(BinarySubject {
                id: subject_id(i, n),
                grid: TimeGrid::new(keep.iter().map(|&k| times[k]).collect())?,
                responses: keep.iter().map(|&k| truth.responses[i][k]).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulated {
        dataset: BinaryDataset::new(subjects)?,
        truth,
    })
}

/// Removes `⌊sparsity · total⌋` observations uniformly without replacement,
/// skipping any removal that would leave a subject with no observations.
fn apply_dropout(kept: &mut [Vec<bool>], sparsity: f64, rng: &mut ChainRng) {
    let total: usize = kept.iter().map(Vec::len).sum();
    let target = (sparsity * total as f64).floor() as usize;
    let mut cells: Vec<(usize, usize)> = kept
        .iter()
        .enumerate()
        .flat_map(|(i, row)| (0..row.len()).map(move |k| (i, k)))
        .collect();
    cells.shuffle(rng);
    let mut left: Vec<usize> = kept.iter().map(Vec::len).collect();
    let mut removed = 0;
    for (i, k) in cells {
        if removed == target {
            break;
        }
        if left[i] > 1 {
            kept[i][k] = false;
            left[i] -= 1;
            removed += 1;
        }
    }
}
