//! Benchmark sweeps over trajectory counts, confounder misspecification and
//! posterior noise, with CSV and SVG emission.
//!
//! Every repetition draws its randomness from a child seed derived from the
//! master seed and the repetition's coordinates, so results do not depend on
//! thread count or on how many other repetitions run.

mod config;
mod plot;
mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::BenchmarkConfig;
pub use plot::{emit_plot, render_svg, PlotKind};
pub use report::{emit_csv, parse_report_csv, write_report_csv, REPORT_HEADER};

use crate::confounding::{asd, exact_posterior, inject_logit_noise, ConfoundingError};
use crate::env::{
    nonstationary_alt_process, sample_trajectories, stationary_distribution, true_policy_value, ConfounderProcess,
    EnvError, MdpucSpec, PolicySpec, PolicyTable,
};
use crate::estimators::{run_methods, Method};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Confounding(#[from] ConfoundingError),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("report parse error: {0}")]
    Parse(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

type Result<T> = std::result::Result<T, HarnessError>;

/// One aggregated line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub n_traj: usize,
    pub alpha: f64,
    pub asd: f64,
    pub mean_estimate: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub rmse: f64,
    pub log_rmse: f64,
}

/// Policy value of `π_e` under one confounder process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub alpha: f64,
    pub value: f64,
    pub std_error: f64,
    /// Stationary-distribution value, available when the process is iid.
    pub exact: Option<f64>,
}

/// A single estimate from one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub n_traj: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub asd: f64,
    pub rep: usize,
    pub seed: u64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub method: Method,
    pub n_traj: usize,
    pub alpha: f64,
    pub sigma: f64,
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
    pub ground_truth: Vec<GroundTruth>,
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl BenchmarkReport {
    pub fn ground_truth_for(&self, alpha: f64) -> Option<&GroundTruth> {
        self.ground_truth.iter().find(|g| g.alpha == alpha)
    }

    /// Per-repetition estimates of one method at one grid point.
    pub fn estimates(&self, method: Method, n_traj: usize, alpha: f64, sigma: f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.method == method && r.n_traj == n_traj && r.alpha == alpha && r.sigma == sigma)
            .map(|r| r.estimate)
            .collect()
    }

    pub fn row(&self, method: Method, n_traj: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.n_traj == n_traj)
    }

    fn merge(&mut self, other: BenchmarkReport) {
        self.rows.extend(other.rows);
        self.runs.extend(other.runs);
        self.failures.extend(other.failures);
        for g in other.ground_truth {
            if self.ground_truth_for(g.alpha).is_none() {
                self.ground_truth.push(g);
            }
        }
        sort_rows(&mut self.rows);
    }
}

pub(crate) fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|x, y| {
        x.method
            .cmp(&y.method)
            .then(x.n_traj.cmp(&y.n_traj))
            .then(x.alpha.total_cmp(&y.alpha))
            .then(x.asd.total_cmp(&y.asd))
    });
}

/// Execution settings that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Directory for cached ground-truth values; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

/// Seed for repetition `rep` at one grid point.
pub fn child_seed(master: u64, n_traj: usize, rep: usize, alpha: f64, sigma: f64) -> u64 {
    derive_seed("repetition", &[master, n_traj as u64, rep as u64, alpha.to_bits(), sigma.to_bits()])
}

/// The confounder process for a misspecification level; `alpha = 1` is the
/// nominal iid process.
pub fn process_for_alpha(spec: &MdpucSpec, alpha: f64) -> ConfounderProcess {
    if alpha == 1.0 {
        spec.confounder_process().clone()
    } else {
        nonstationary_alt_process(alpha)
    }
}

fn policies(cfg: &BenchmarkConfig, spec: &MdpucSpec) -> Result<(PolicyTable, PolicyTable)> {
    Ok((PolicySpec::new(cfg.env, cfg.pi_b).tabulate(spec)?, PolicySpec::new(cfg.env, cfg.pi_e).tabulate(spec)?))
}

fn ground_truth_key(cfg: &BenchmarkConfig, process: &ConfounderProcess) -> String {
    format!(
        "v1|{}|pi_e={:016x}|{:?}|burn_in={}|steps={}|rollouts={}",
        cfg.env.tag(),
        cfg.pi_e.to_bits(),
        process,
        cfg.gt_burn_in,
        cfg.gt_steps,
        cfg.gt_rollouts
    )
}

#[derive(Serialize, Deserialize)]
struct CachedTruth {
    key: String,
    truth: GroundTruth,
}

/// Monte Carlo value of `π_e` under the process for `alpha`, checked against
/// the exact stationary value when the process is iid. Results are cached in
/// `cache_dir` under a hash of the inputs.
pub fn ground_truth(cfg: &BenchmarkConfig, alpha: f64, cache_dir: Option<&Path>) -> Result<GroundTruth> {
    let nominal = cfg.spec();
    let process = process_for_alpha(&nominal, alpha);
    let key = ground_truth_key(cfg, &process);
    let digest = Sha256::digest(key.as_bytes());
    let hex: String = digest[..16].iter().map(|b| format!("{b:02x}")).collect();
    let cache_path = cache_dir.map(|d| d.join(format!("ground_truth_{hex}.toml")));
    if let Some(path) = &cache_path {
        if let Ok(text) = std::fs::read_to_string(path) {
            if let Ok(cached) = toml::from_str::<CachedTruth>(&text) {
                if cached.key == key {
                    return Ok(GroundTruth { alpha, ..cached.truth });
                }
            }
        }
    }
    let spec = nominal.with_confounder_process(process)?;
    let (_, eval) = policies(cfg, &spec)?;
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let mc = true_policy_value(&spec, &eval, cfg.gt_burn_in, cfg.gt_steps, cfg.gt_rollouts, seed)?;
    let exact = match spec.confounder_process().iid_probs() {
        Some(_) => Some(stationary_distribution(&spec, &eval)?.average_reward(&spec)),
        None => None,
    };
    let truth = GroundTruth { alpha, value: mc.value, std_error: mc.std_error, exact };
    if let Some(path) = &cache_path {
        let io_err = |e: std::io::Error| HarnessError::Io { path: path.clone(), message: e.to_string() };
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err)?;
        }
        let text = toml::to_string(&CachedTruth { key, truth: truth.clone() })
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(io_err)?;
    }
    Ok(truth)
}

enum JobOutcome {
    Estimate(RunRecord),
    Failure(RunFailure),
}

/// Runs every repetition at one `(alpha, sigma)` point and aggregates.
fn run_point(cfg: &BenchmarkConfig, alpha: f64, sigma: f64, opts: &RunOptions) -> Result<BenchmarkReport> {
    let nominal = cfg.spec();
    let (behavior, eval) = policies(cfg, &nominal)?;
    // estimators always assume the nominal iid model
    let oracle = exact_posterior(&nominal, &behavior)?;
    let sim_spec = nominal.with_confounder_process(process_for_alpha(&nominal, alpha))?;
    let truth = ground_truth(cfg, alpha, opts.cache_dir.as_deref())?;
    let asd_value = asd(
        &nominal,
        &behavior,
        sigma,
        cfg.asd_triples,
        cfg.asd_draws,
        derive_seed("asd", &[cfg.master_seed, sigma.to_bits()]),
    )?;
    let pipeline = cfg.pipeline();
    let horizon = cfg.horizon();

    let jobs: Vec<(usize, usize)> =
        cfg.n_traj_grid.iter().flat_map(|&n| (0..cfg.repetitions).map(move |rep| (n, rep))).collect();
    let run_job = |&(n_traj, rep): &(usize, usize)| -> Vec<JobOutcome> {
        let seed = child_seed(cfg.master_seed, n_traj, rep, alpha, sigma);
        let fail_all = |error: String| -> Vec<JobOutcome> {
            cfg.methods
                .iter()
                .map(|&method| JobOutcome::Failure(RunFailure { method, n_traj, alpha, sigma, rep, seed, error: error.clone() }))
                .collect()
        };
        let data = match sample_trajectories(&sim_spec, &behavior, n_traj, horizon, derive_seed("data", &[seed])) {
            Ok(d) => d.without_hidden(),
            Err(e) => return fail_all(e.to_string()),
        };
        let noisy;
        let oracle_ref = if sigma > 0.0 {
            match inject_logit_noise(&oracle, sigma, derive_seed("oracle-noise", &[seed])) {
                Ok(o) => {
                    noisy = o;
                    &noisy
                }
                Err(e) => return fail_all(e.to_string()),
            }
        } else {
            &oracle
        };
        let (results, _) = run_methods(&data, oracle_ref, &behavior, &eval, &pipeline, &cfg.methods, seed);
        results
            .into_iter()
            .map(|(method, res)| match res {
                Ok(est) => JobOutcome::Estimate(RunRecord {
                    method,
                    n_traj,
                    alpha,
                    sigma,
                    asd: asd_value,
                    rep,
                    seed,
                    estimate: est.value,
                }),
                Err(e) => JobOutcome::Failure(RunFailure { method, n_traj, alpha, sigma, rep, seed, error: e.to_string() }),
            })
            .collect()
    };

    let outcomes: Vec<Vec<JobOutcome>> = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::ThreadPool(e.to_string()))?
            .install(|| jobs.par_iter().map(run_job).collect()),
        None => jobs.par_iter().map(run_job).collect(),
    };

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            JobOutcome::Estimate(r) => runs.push(r),
            JobOutcome::Failure(f) => failures.push(f),
        }
    }
    runs.sort_by(|x, y| x.method.cmp(&y.method).then(x.n_traj.cmp(&y.n_traj)).then(x.rep.cmp(&y.rep)));

    let mut groups: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.method, r.n_traj)).or_default().push(r.estimate);
    }
    let mut rows: Vec<ReportRow> = groups
        .into_iter()
        .map(|((method, n_traj), est)| {
            let ci = stats::normal_ci(&est);
            let rmse = stats::rmse(&est, truth.value);
            ReportRow {
                method,
                n_traj,
                alpha,
                asd: asd_value,
                mean_estimate: stats::mean(&est),
                ci_low: ci.map(|c| c.0),
                ci_high: ci.map(|c| c.1),
                rmse,
                log_rmse: rmse.ln(),
            }
        })
        .collect();
    sort_rows(&mut rows);
    Ok(BenchmarkReport { rows, ground_truth: vec![truth], runs, failures })
}

/// Estimates versus trajectory count at the config's `alpha` and noise level.
pub fn run_benchmark(cfg: &BenchmarkConfig, opts: &RunOptions) -> Result<BenchmarkReport> {
    cfg.validate()?;
    run_point(cfg, cfg.alpha, cfg.noise_sigma, opts)
}

/// Repeats the benchmark with confounders drawn from the mixture of the iid
/// prior and the sticky Markov alternative, one sweep per `alpha`.
pub fn run_sensitivity_alpha(cfg: &BenchmarkConfig, alpha_grid: &[f64], opts: &RunOptions) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if alpha_grid.is_empty() || alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(HarnessError::Config("alpha grid must be nonempty and within [0, 1]".into()));
    }
    let mut report = BenchmarkReport::default();
    for &alpha in alpha_grid {
        report.merge(run_point(cfg, alpha, cfg.noise_sigma, opts)?);
    }
    Ok(report)
}

/// Repeats the benchmark with Gaussian logit noise on the posterior oracle,
/// fresh per repetition, one sweep per `sigma`.
pub fn run_sensitivity_noise(cfg: &BenchmarkConfig, sigma_grid: &[f64], opts: &RunOptions) -> Result<BenchmarkReport> {
    cfg.validate()?;
    if sigma_grid.is_empty() || sigma_grid.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(HarnessError::Config("sigma grid must be nonempty, finite and nonnegative".into()));
    }
    let mut report = BenchmarkReport::default();
    for &sigma in sigma_grid {
        report.merge(run_point(cfg, cfg.alpha, sigma, opts)?);
    }
    Ok(report)
}
