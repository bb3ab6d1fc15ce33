use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gpiwp::data::{BinaryDataset, OrdinalDataset, RawSubject};
use gpiwp::diagnostics::{chain_diagnostics, columns_by_time, elicit_noise_prior, pearson_and_tetrachoric};
use gpiwp::gibbs::run_chain;
use gpiwp::io;
use gpiwp::ordinal::{self, fit_ordinal};
use gpiwp::predict::{
    binary_covariance, parse_grid_spec, posterior_covariance_kernel, probability_response_curve, CurveOptions,
    FineGrid, SubjectRef,
};
use gpiwp::randdist::derive_seed;
use gpiwp::simgen::{generate, subject_id, GridSpec, SimScenario};
use gpiwp::state::MeanModel;
use gpiwp::{PosteriorDraws, PriorConfig, SamplerConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{ArchiveEntry, ChainEntry, RunManifest, MANIFEST};
use crate::{
    CorrelationsArgs, DecomposeArgs, DiagnoseArgs, ElicitArgs, FitArgs, PredictArgs, RunSelect, ScoreArgs,
    SimulateArgs,
};

pub const THREADS_ENV: &str = "GPIWP_THREADS";

pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn read_data(path: &Path) -> Result<Vec<RawSubject<f64>>> {
    io::read_raw_csv(path).with_context(|| format!("reading {}", path.display()))
}

/// `start:end:step` or a comma-separated list.
fn parse_times(spec: &str) -> Result<Vec<f64>> {
    if spec.contains(':') {
        return Ok(parse_grid_spec(spec)?);
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad time {s:?} in {spec:?}")))
        .collect()
}

/// `out.csv` becomes `out_category_<j>.csv`.
fn category_path(out: &Path, j: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_category_{j}.{}", ext.to_string_lossy()),
        None => format!("{stem}_category_{j}"),
    };
    out.with_file_name(name)
}

fn preset(args: &SimulateArgs, name: &str) -> Result<SimScenario> {
    let (kind, case) = name
        .split_once('-')
        .and_then(|(k, c)| c.parse::<u32>().ok().map(|c| (k, c)))
        .with_context(|| format!("unknown preset {name:?}"))?;
    let sparsity = args.sparsity.unwrap_or(0.0);
    let mut sc = match kind {
        "mean" => SimScenario::mean_study(case, args.subjects, args.len, sparsity, args.seed)?,
        "cov" => SimScenario::covariance_study(case, args.subjects, args.len, args.seed)?,
        _ => bail!("unknown preset {name:?}"),
    };
    sc.sparsity = sparsity;
    Ok(sc)
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut sc = match (&args.scenario, &args.preset) {
        (Some(p), _) => {
            let mut sc: SimScenario = io::read_json(p).with_context(|| format!("reading {}", p.display()))?;
            if let Some(s) = args.sparsity {
                sc.sparsity = s;
            }
            sc
        }
        (None, Some(name)) => preset(args, name)?,
        (None, None) => bail!("either --scenario or --preset is required"),
    };
    sc.seed = args.seed;
    let sim = generate(&sc)?;
    std::fs::create_dir_all(&args.out)?;
    io::write_binary_csv(&args.out.join("data.csv"), &sim.dataset)?;
    let ids: Vec<String> = (0..sc.n_subjects).map(|i| subject_id(i, sc.n_subjects)).collect();
    io::write_truth_csv(&args.out.join("truth.csv"), &ids, &sim.truth)?;
    let span = match sc.grid {
        GridSpec::Regular { len } => len.saturating_sub(1) as f64,
        GridSpec::Uniform { lower, upper, .. } => (upper - lower).ceil(),
    };
    let distances: Vec<f64> = (0..=span as usize).map(|d| d as f64).collect();
    io::write_true_kernel_csv(&args.out.join("kernel.csv"), &sc, &distances)?;
    io::write_json(&args.out.join("scenario.json"), &sc)?;
    println!(
        "simulated {} observations for {} subjects into {}",
        sim.dataset.n_observations(),
        sc.n_subjects,
        args.out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PriorsFile {
    One(PriorConfig),
    PerCategory(Vec<PriorConfig>),
}

fn load_priors(path: Option<&Path>, n: usize) -> Result<Vec<PriorConfig>> {
    let file = match path {
        None => PriorsFile::One(PriorConfig::default()),
        Some(p) => io::read_json(p).with_context(|| format!("reading {}", p.display()))?,
    };
    let priors = match file {
        PriorsFile::One(p) => vec![p; n],
        PriorsFile::PerCategory(v) if v.len() == n => v,
        PriorsFile::PerCategory(v) => bail!("priors file lists {} prior sets, the fit needs {n}", v.len()),
    };
    for p in &priors {
        p.validate()?;
    }
    Ok(priors)
}

fn sampler_config(args: &FitArgs) -> Result<SamplerConfig> {
    let mut cfg = match &args.sampler {
        Some(p) => io::read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => SamplerConfig::new(5000, 1000, 1, 0),
    };
    if let Some(v) = args.iterations {
        cfg.total_iterations = v;
    }
    if let Some(v) = args.burn_in {
        cfg.burn_in = v;
    }
    if let Some(v) = args.thin {
        cfg.thinning = v;
    }
    if args.constant_mean {
        cfg.mean_model = MeanModel::Constant;
    }
    cfg.seed = args.seed;
    cfg.validate()?;
    Ok(cfg)
}

fn entry(stem: String, category: Option<usize>, d: &PosteriorDraws) -> ArchiveEntry {
    ArchiveEntry {
        category,
        stem,
        seed: d.meta.seed,
        n_draws: d.n_draws(),
        total_seconds: d.meta.total_seconds,
        step_seconds: d.meta.step_seconds.clone(),
    }
}

pub fn fit(args: &FitArgs) -> Result<()> {
    if args.chains == 0 {
        bail!("--chains must be at least 1");
    }
    let start = Instant::now();
    let raw = read_data(&args.data)?;
    let cfg = sampler_config(args)?;
    let chain_seeds: Vec<u64> = (0..args.chains as u64).map(|c| derive_seed(args.seed, c)).collect();

    // Per chain: (category, draws) pairs.
    let (categories, priors, runs): (Option<u32>, Vec<PriorConfig>, Vec<Vec<(Option<usize>, PosteriorDraws)>>) =
        if args.ordinal {
            let ods = OrdinalDataset::from_raw(&raw, None)?;
            let c = ods.categories();
            if c < 2 {
                bail!("ordinal data needs at least two categories, found {c}");
            }
            let mut seen = vec![false; c as usize];
            for s in ods.subjects() {
                for &y in &s.responses {
                    seen[y as usize - 1] = true;
                }
            }
            if let Some(j) = seen.iter().position(|&s| !s) {
                bail!("categories must be contiguous 1..{c}; category {} never occurs", j + 1);
            }
            let dec = ordinal::decompose(&ods)?;
            let priors = load_priors(args.priors.as_deref(), c as usize - 1)?;
            let runs = chain_seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = SamplerConfig { seed, ..cfg.clone() };
                    let fits = fit_ordinal(&dec, &priors, &cfg, true)?;
                    Ok(fits.into_iter().enumerate().map(|(j, d)| (Some(j + 1), d)).collect())
                })
                .collect::<gpiwp::Result<Vec<_>>>()?;
            (Some(c), priors, runs)
        } else {
            let ds = BinaryDataset::from_raw(&raw)?;
            let priors = load_priors(args.priors.as_deref(), 1)?;
            let runs = chain_seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = SamplerConfig { seed, ..cfg.clone() };
                    Ok(vec![(None, run_chain(&ds, &priors[0], &cfg)?)])
                })
                .collect::<gpiwp::Result<Vec<_>>>()?;
            (None, priors, runs)
        };

    std::fs::create_dir_all(&args.out)?;
    let mut chains = Vec::with_capacity(runs.len());
    for (c, fits) in runs.iter().enumerate() {
        let mut archives = Vec::new();
        for (cat, d) in fits {
            let stem = match cat {
                Some(j) => format!("chain_{}_category_{j}", c + 1),
                None => format!("chain_{}", c + 1),
            };
            let mut labels = BTreeMap::new();
            labels.insert("chain".to_string(), (c + 1).to_string());
            if let Some(j) = cat {
                labels.insert("category".to_string(), j.to_string());
            }
            io::write_archive(&args.out.join(&stem), d, labels)?;
            archives.push(entry(stem, *cat, d));
        }
        chains.push(ChainEntry {
            chain: c + 1,
            seed: chain_seeds[c],
            archives,
        });
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        data: args.data.display().to_string(),
        ordinal: args.ordinal,
        categories,
        seed: args.seed,
        threads: rayon::current_num_threads(),
        sampler: cfg,
        priors,
        chains,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    io::write_json(&args.out.join(MANIFEST), &manifest)?;
    let n_archives: usize = manifest.chains.iter().map(|c| c.archives.len()).sum();
    println!("wrote {n_archives} archive(s) to {}", args.out.display());
    Ok(())
}

struct LoadedRun {
    manifest: RunManifest,
    fits: Vec<PosteriorDraws>,
}

fn load_run(sel: &RunSelect) -> Result<LoadedRun> {
    let manifest = RunManifest::load(&sel.run)?;
    let fits = manifest
        .stems(&sel.run, sel.chain)?
        .iter()
        .map(|stem| {
            io::read_archive(stem)
                .map(|(d, _)| d)
                .with_context(|| format!("reading archive {}", stem.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedRun { manifest, fits })
}

fn write_covariance(path: &Path, draws: &PosteriorDraws, subject: &SubjectRef, times: &[f64], opts: &CurveOptions) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "time_a", "time_b", "var_a", "var_b", "cov_mean", "cov_lower", "cov_upper", "total_cov",
    ])?;
    for (a, &ta) in times.iter().enumerate() {
        for &tb in &times[a..] {
            let c = binary_covariance(draws, subject, (ta, tb), opts)?;
            w.write_record([
                ta.to_string(),
                tb.to_string(),
                c.var_a.mean.to_string(),
                c.var_b.mean.to_string(),
                c.cov.mean.to_string(),
                c.cov.lower.to_string(),
                c.cov.upper.to_string(),
                c.total_cov.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let run = load_run(&args.select)?;
    let subject = SubjectRef::parse(&args.subject);
    let requested = args.fine_grid.as_deref().map(parse_times).transpose()?.unwrap_or_default();
    let opts = CurveOptions {
        mc_inner: args.mc_inner,
        level: args.level,
        seed: args.seed,
        keep_draws: false,
    };
    if !(args.level > 0.0 && args.level < 1.0) {
        bail!("--level must lie in (0, 1)");
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    if run.manifest.ordinal {
        let curves = ordinal::ordinal_probability_curves(&run.fits, &subject, &requested, &opts)?;
        for (j, c) in curves.iter().enumerate() {
            io::write_curve_csv(&category_path(&args.out, j + 1), &[(Some(j + 1), c)])?;
        }
        if args.covariance_out.is_some() {
            bail!("--covariance-out applies to binary fits only");
        }
    } else {
        let draws = &run.fits[0];
        let fine = FineGrid::new(draws.pooled().times(), &requested)?;
        let curve = probability_response_curve(draws, &subject, &fine, &opts)?;
        io::write_curve_csv(&args.out, &[(None, &curve)])?;
        if let (Some(spec), Some(path)) = (&args.covariance_times, &args.covariance_out) {
            write_covariance(path, draws, &subject, &parse_times(spec)?, &opts)?;
        }
    }
    if let (Some(spec), Some(path)) = (&args.kernel_distances, &args.kernel_out) {
        let distances = parse_times(spec)?;
        for (j, d) in run.fits.iter().enumerate() {
            let k = posterior_covariance_kernel(d, &distances, args.level)?;
            let p = if run.manifest.ordinal { category_path(path, j + 1) } else { path.clone() };
            io::write_kernel_csv(&p, &k)?;
        }
    }
    Ok(())
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let run = load_run(&args.select)?;
    if run.manifest.ordinal {
        bail!("score applies to binary fits; score each category dataset from `decompose` separately");
    }
    let ds = BinaryDataset::from_raw(&read_data(&args.data)?)?;
    let report = gpiwp::diagnostics::score(&run.fits[0], &ds, args.replicates, args.seed)?;
    io::write_json(&args.out, &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

pub fn decompose(args: &DecomposeArgs) -> Result<()> {
    let ods = OrdinalDataset::from_raw(&read_data(&args.data)?, None)?;
    let dec = ordinal::decompose(&ods)?;
    let files = io::write_decomposition(&args.out, &dec)?;
    println!("wrote {} file(s) to {}", files.len(), args.out.display());
    Ok(())
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    let run = load_run(&args.select)?;
    for (j, d) in run.fits.iter().enumerate() {
        let rows = chain_diagnostics(d)?;
        let pick = |p: &Path| if run.manifest.ordinal { category_path(p, j + 1) } else { p.to_path_buf() };
        io::write_trace_summary_csv(&pick(&args.out), &rows)?;
        if let Some(t) = &args.trace_out {
            io::write_trace_csv(&pick(t), d)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CorrelationReport {
    times: Vec<f64>,
    pearson: Vec<Vec<Option<f64>>>,
    tetrachoric: Vec<Vec<Option<f64>>>,
}

pub fn correlations(args: &CorrelationsArgs) -> Result<()> {
    let ds = BinaryDataset::from_raw(&read_data(&args.data)?)?;
    let cor = pearson_and_tetrachoric(&columns_by_time(&ds));
    let report = CorrelationReport {
        times: ds.pooled().times().to_vec(),
        pearson: cor.pearson,
        tetrachoric: cor.tetrachoric,
    };
    io::write_json(&args.out, &report)?;
    Ok(())
}

#[derive(Serialize)]
struct ElicitReport {
    a_eps: f64,
    b_eps: f64,
    range: f64,
    upsilon: f64,
    coverage: f64,
}

pub fn elicit(args: &ElicitArgs) -> Result<()> {
    let (a, b) = elicit_noise_prior(args.range, args.upsilon, args.coverage)?;
    let r = ElicitReport {
        a_eps: a,
        b_eps: b,
        range: args.range,
        upsilon: args.upsilon,
        coverage: args.coverage,
    };
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}
