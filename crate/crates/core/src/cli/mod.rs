//! Commands behind the `bsjoint` binary. Each returns its results so the
//! binary only parses flags, prints tables and maps errors to exit codes.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    load_cohort, load_comparison, load_samples, simulate_cohort, write_cohort, write_comparison,
    write_fit_stats, write_roc, write_samples, write_summary, ComparisonRow, DataError, SimulationConfig,
    SimulationTruth,
};
use crate::diagnostics::{fit_stats, landmark_markers, roc_curve, summarize, DiagnosticsError, FitStats, ParamSummary, RocResult};
use crate::gibbs::{run_chain, PosteriorSamples, PriorConfig};
use crate::model::{JointModel, ModelError, ModelStructure};
use crate::spline::KnotVector;

pub use config::{read_config_file, render_config, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// 1 for user or configuration errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

fn model_error(e: ModelError) -> CliError {
    CliError::Config(format!("model: {e}"))
}

fn diagnostics_error(e: DiagnosticsError) -> CliError {
    CliError::Numerical(format!("diagnostics: {e}"))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(DataError::Io { path: path.to_path_buf(), source: e })
}

pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

/// Samples file of chain `c` (1-based) in a fit directory.
pub fn chain_file(dir: &Path, c: usize) -> PathBuf {
    dir.join(format!("chain_{c}.csv"))
}

/// Loads the cohort named by `config` and resolves knots and jump points
/// against it.
pub fn build_model(config: &RunConfig) -> Result<JointModel, CliError> {
    let missing = |k: &str| CliError::Config(format!("configuration key `{k}` is required"));
    let long = config.long.as_ref().ok_or_else(|| missing("long"))?;
    let surv = config.surv.as_ref().ok_or_else(|| missing("surv"))?;
    let mut cohort = load_cohort(surv, long)?;
    if let Some(h) = config.horizon {
        cohort.end = h;
    }
    cohort.validate().map_err(model_error)?;
    let structure = ModelStructure::resolve(&cohort.subjects, &config.model, cohort.end).map_err(model_error)?;
    JointModel::new(cohort.subjects, structure).map_err(model_error)
}

/// Draws, summary and statistics of one fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub chains: Vec<PosteriorSamples>,
    pub summary: Vec<ParamSummary>,
    pub stats: FitStats,
    pub comparison: ComparisonRow,
}

/// Runs the configured chains on `model` (at most `jobs` at once) and
/// computes the pooled summary and fit statistics. Nothing is written.
pub fn fit(model: &JointModel, config: &RunConfig) -> Result<FitReport, CliError> {
    let prior = PriorConfig::from_scalars(model.dims(), &config.prior);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("configuration key `jobs`: {e}")))?;
    let runs: Vec<_> = pool.install(|| {
        (0..config.chains)
            .into_par_iter()
            .map(|c| run_chain(model, &prior, &config.tuning, &config.mcmc(c as u64)))
            .collect()
    });
    let echo = config.echo();
    let mut chains = Vec::with_capacity(runs.len());
    for (c, run) in runs.into_iter().enumerate() {
        let mut samples = run.map_err(|e| CliError::Numerical(format!("gibbs: chain {}: {e}", c + 1)))?;
        samples.meta.config = echo.clone();
        chains.push(samples);
    }
    let summary = summarize(&chains, config.level).map_err(diagnostics_error)?;
    let stats = fit_stats(&chains, model).map_err(diagnostics_error)?;
    let comparison = ComparisonRow {
        model_id: config.model_id(),
        q: config.model.q,
        kind: config.model.kind,
        dic: stats.dic,
        p_d: stats.p_d,
        lpml: stats.lpml,
    };
    Ok(FitReport { chains, summary, stats, comparison })
}

/// Fits the configured model and writes `chain_<c>.csv` (with JSON
/// sidecars), the summary, the fit statistics, a one-row comparison table
/// and the resolved configuration into `config.out`.
pub fn cmd_fit(config: &RunConfig) -> Result<FitReport, CliError> {
    let model = build_model(config)?;
    let report = fit(&model, config)?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    for (c, samples) in report.chains.iter().enumerate() {
        write_samples(samples, &chain_file(out, c + 1))?;
    }
    write_summary(&report.summary, &out.join(SUMMARY_FILE))?;
    write_fit_stats(&report.stats, &out.join(STATS_FILE))?;
    write_comparison(std::slice::from_ref(&report.comparison), &out.join(COMPARISON_FILE))?;
    let path = out.join(CONFIG_FILE);
    fs::write(&path, render_config(&config.echo())).map_err(|e| io_error(&path, e))?;
    Ok(report)
}

/// Configuration and chains of a finished fit directory.
pub fn load_fit(dir: &Path) -> Result<(RunConfig, Vec<PosteriorSamples>), CliError> {
    let config = RunConfig::from_pairs(&read_config_file(&dir.join(CONFIG_FILE))?)?;
    let chains = (1..=config.chains)
        .map(|c| load_samples(&chain_file(dir, c)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((config, chains))
}

/// Pooled summary of a fit directory's chains at `level`.
pub fn cmd_summarize(dir: &Path, level: f64) -> Result<Vec<ParamSummary>, CliError> {
    let (_, chains) = load_fit(dir)?;
    summarize(&chains, level).map_err(|e| match e {
        DiagnosticsError::InvalidLevel(_) => CliError::Config(format!("level: {e}")),
        other => diagnostics_error(other),
    })
}

/// Collects the comparison rows of several fit directories, sorted by DIC
/// ascending (ties keep the given order). Writes the table to `out` if set.
pub fn cmd_compare(dirs: &[PathBuf], out: Option<&Path>) -> Result<Vec<ComparisonRow>, CliError> {
    if dirs.is_empty() {
        return Err(CliError::Config("compare needs at least one fit directory".into()));
    }
    let mut rows = Vec::new();
    for d in dirs {
        rows.extend(load_comparison(&d.join(COMPARISON_FILE))?);
    }
    rows.sort_by(|a, b| a.dic.total_cmp(&b.dic));
    if let Some(path) = out {
        write_comparison(&rows, path)?;
    }
    Ok(rows)
}

/// Rebuilds the fitted model from the fit's data files, reusing the knots
/// and jump points stored with the draws.
pub fn model_for_fit(config: &RunConfig, chains: &[PosteriorSamples]) -> Result<JointModel, CliError> {
    let meta = &chains.first().ok_or_else(|| CliError::Config("fit has no chains".into()))?.meta;
    let model = build_model(config)?;
    let basis = KnotVector::new(meta.knots.clone()).map_err(|e| model_error(e.into()))?;
    let mut jumps = meta.jumps.clone();
    jumps.push(f64::INFINITY);
    let structure = ModelStructure::new(meta.dims.kind, basis, jumps, meta.quad_order).map_err(model_error)?;
    JointModel::new(model.subjects, structure).map_err(model_error)
}

/// Posterior-mean hazard linear predictor at `landmark` per subject.
pub fn posterior_markers(model: &JointModel, chains: &[PosteriorSamples], landmark: f64) -> Result<Vec<f64>, CliError> {
    let mut sum = vec![0.0; model.subjects.len()];
    let mut n = 0.0;
    for samples in chains {
        for g in 0..samples.len() {
            let m = landmark_markers(model, &samples.state(g), landmark).map_err(model_error)?;
            sum.iter_mut().zip(&m).for_each(|(s, v)| *s += v);
            n += 1.0;
        }
    }
    if n == 0.0 {
        return Err(diagnostics_error(DiagnosticsError::EmptySamples));
    }
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// ROC curve for each landmark, scored by the posterior-mean linear
/// predictor. Curves go to `roc_<landmark>.csv` in `out` (the fit directory
/// by default).
pub fn cmd_roc(dir: &Path, landmarks: &[f64], horizon: f64, out: Option<&Path>) -> Result<Vec<RocResult>, CliError> {
    if !(horizon > 0.0) {
        return Err(CliError::Config(format!("horizon {horizon} must be positive")));
    }
    let (config, chains) = load_fit(dir)?;
    let model = model_for_fit(&config, &chains)?;
    let times: Vec<f64> = model.subjects.iter().map(|s| s.event_time).collect();
    let events: Vec<bool> = model.subjects.iter().map(|s| s.event).collect();
    let out = out.unwrap_or(dir);
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let mut results = Vec::with_capacity(landmarks.len());
    for &lm in landmarks {
        let markers = posterior_markers(&model, &chains, lm)?;
        let roc = roc_curve(&markers, &times, &events, lm, horizon).map_err(|e| match e {
            DiagnosticsError::NoSubjectsAtRisk { .. } | DiagnosticsError::NoCasesOrControls { .. } => {
                CliError::Config(format!("landmark {lm}: {e}"))
            }
            other => diagnostics_error(other),
        })?;
        write_roc(&roc, &out.join(format!("roc_{lm}.csv")))?;
        results.push(roc);
    }
    Ok(results)
}

/// Truth and simulation settings, stored together as the truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth: SimulationTruth,
    pub simulation: SimulationConfig,
}

/// Simulates a cohort and writes `subjects.csv`, `measurements.csv` and
/// `truth.json` into `out`.
pub fn cmd_simulate(truth: &SimulationTruth, config: &SimulationConfig, out: &Path) -> Result<(), CliError> {
    let (cohort, _) = simulate_cohort(truth, config).map_err(|e| match e {
        DataError::InversionFailure { .. } => CliError::Numerical(format!("simulate: {e}")),
        other => CliError::Config(format!("simulate: {other}")),
    })?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    write_cohort(&cohort, &out.join("subjects.csv"), &out.join("measurements.csv"))?;
    let path = out.join("truth.json");
    let file = TruthFile { truth: truth.clone(), simulation: config.clone() };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|source| DataError::Json { path: path.clone(), source })?;
    fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
    Ok(())
}

/// Reads a truth file: either a bare [`SimulationTruth`] or a
/// [`TruthFile`] written by [`cmd_simulate`].
pub fn read_truth(path: &Path) -> Result<SimulationTruth, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if let Ok(file) = serde_json::from_str::<TruthFile>(&text) {
        return Ok(file.truth);
    }
    serde_json::from_str(&text).map_err(|source| CliError::Data(DataError::Json { path: path.to_path_buf(), source }))
}
