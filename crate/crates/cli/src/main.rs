//! `gpiwp` command-line tool.
//!
//! Exit codes: 0 success, 1 file-system failure, 2 invalid input or
//! configuration, 3 numerical failure inside the sampler.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gpiwp", version, about = "Longitudinal binary and ordinal responses with a GP/IWP hierarchical model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a data CSV.
    Fit(FitArgs),
    /// Probability response curves, binary covariances and kernel curves.
    Predict(PredictArgs),
    /// Posterior predictive loss and CRPS for a binary fit.
    Score(ScoreArgs),
    /// Split ordinal data into its per-category binary datasets.
    Decompose(DecomposeArgs),
    /// Trace summaries and effective sample sizes.
    Diagnose(DiagnoseArgs),
    /// Pairwise Pearson and tetrachoric correlations of a binary dataset.
    Correlations(CorrelationsArgs),
    /// Inverse-gamma noise prior from a plausible latent range.
    Elicit(ElicitArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON; alternative to `--preset`.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub scenario: Option<PathBuf>,
    /// Built-in scenario: mean-1, mean-2, mean-3, cov-1 … cov-4.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 30)]
    pub subjects: usize,
    /// Grid length for presets.
    #[arg(long, default_value_t = 31)]
    pub len: usize,
    /// Fraction of observations removed (presets only).
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// One prior object, or an array with one entry per ordinal category.
    #[arg(long)]
    pub priors: Option<PathBuf>,
    /// Sampler JSON (iterations, burn-in, thinning, grid size, storage).
    #[arg(long)]
    pub sampler: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Fix the mean function at a constant level.
    #[arg(long)]
    pub constant_mean: bool,
    #[arg(long)]
    pub ordinal: bool,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunSelect {
    /// Directory written by `fit`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub chain: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub select: RunSelect,
    /// Subject id, or `new` for an unobserved subject.
    #[arg(long, default_value = "new")]
    pub subject: String,
    /// Extra times as `start:end:step` (step may be a fraction like 1/3)
    /// or a comma list.
    #[arg(long)]
    pub fine_grid: Option<String>,
    /// Curve CSV; ordinal runs write `<stem>_category_<j>.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Binary covariance table over the listed times.
    #[arg(long)]
    pub covariance_times: Option<String>,
    #[arg(long, requires = "covariance_times")]
    pub covariance_out: Option<PathBuf>,
    /// Posterior kernel curve over the listed distances.
    #[arg(long)]
    pub kernel_distances: Option<String>,
    #[arg(long, requires = "kernel_distances")]
    pub kernel_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub mc_inner: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub select: RunSelect,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub select: RunSelect,
    /// Summary CSV (one row per scalar parameter).
    #[arg(long)]
    pub out: PathBuf,
    /// Raw scalar traces.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelationsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ElicitArgs {
    /// Half-width `R` of the plausible range of latent noise.
    #[arg(long)]
    pub range: f64,
    /// Prior degrees of freedom `υ`.
    #[arg(long)]
    pub upsilon: f64,
    #[arg(long, default_value_t = gpiwp::diagnostics::DEFAULT_ELICIT_COVERAGE)]
    pub coverage: f64,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gpiwp::Error>() {
            return match e {
                e if e.is_numerical() => 3,
                gpiwp::Error::Io(_) => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = commands::init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let res = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Score(a) => commands::score(&a),
        Command::Decompose(a) => commands::decompose(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
        Command::Correlations(a) => commands::correlations(&a),
        Command::Elicit(a) => commands::elicit(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::exit_code;

    #[test]
    fn exit_codes_follow_error_kind() {
        let numerical = gpiwp::Error::Step {
            step: "step5_update_niw",
            source: Box::new(gpiwp::Error::NotPositiveDefinite("posterior scale".into())),
        };
        assert_eq!(exit_code(&anyhow::Error::new(numerical).context("fitting")), 3);
        assert_eq!(exit_code(&anyhow::Error::new(gpiwp::Error::UnknownSubject("x".into()))), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(exit_code(&anyhow::Error::new(gpiwp::Error::Io(io))), 1);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), 2);
    }
}
