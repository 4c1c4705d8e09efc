use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mdpuc_ope::balancing::compress;
use mdpuc_ope::confounding::exact_posterior;
use mdpuc_ope::env::{sample_trajectories, EnvKind, PolicySpec};
use mdpuc_ope::estimators::{run_methods, Method};
use mdpuc_ope::harness::{
    emit_csv, emit_plot, parse_report_csv, run_benchmark, run_sensitivity_alpha, run_sensitivity_noise,
    BenchmarkConfig, BenchmarkReport, GroundTruth, HarnessError, PlotKind, RunOptions,
};
use mdpuc_ope::io::{self, RunRow};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Data(#[from] io::IoError),
    #[error("{0}")]
    Estimation(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Harness(HarnessError::Config(_)) => "config",
            CliError::Harness(_) => "harness",
            CliError::Data(_) => "data",
            CliError::Estimation(_) => "estimation",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Parser)]
#[command(name = "mdpuc-ope", version, about = "Off-policy evaluation under iid unmeasured confounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample behavior-policy trajectories to CSV.
    Simulate(SimulateArgs),
    /// Estimate the evaluation-policy value from a dataset CSV.
    Estimate(EstimateArgs),
    /// Estimates and RMSE against trajectory count.
    Benchmark(BenchArgs),
    /// Sweep the iid/Markov confounder mixture weight.
    SensitivityAlpha(AlphaArgs),
    /// Sweep Gaussian logit noise on the posterior oracle.
    SensitivityNoise(NoiseArgs),
    /// Render a report CSV as SVG.
    Plot(PlotArgs),
}

/// A TOML config file plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    #[arg(long)]
    pi_b: Option<f64>,
    #[arg(long)]
    pi_e: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_traj: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    balance_lambda: Option<f64>,
    #[arg(long)]
    kernel_ws: Option<f64>,
    #[arg(long)]
    kernel_wu: Option<f64>,
    #[arg(long)]
    kernel_wsu: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<BenchmarkConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                let mut cfg: BenchmarkConfig = BenchmarkConfig::from_toml_str(&text)?;
                if let Some(env) = self.env {
                    cfg.env = env;
                }
                cfg
            }
            None => BenchmarkConfig { env: self.env.unwrap_or(EnvKind::ModelWin), ..BenchmarkConfig::default() },
        };
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*};
        }
        set!(pi_b, pi_e, repetitions, methods, alpha, noise_sigma, balance_lambda, kernel_ws, kernel_wu, kernel_wsu);
        if let Some(h) = self.horizon {
            cfg.horizon = Some(h);
        }
        if let Some(grid) = &self.n_traj {
            cfg.n_traj_grid = grid.clone();
        }
        if let Some(seed) = seed {
            cfg.master_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policy parameter to simulate; defaults to the behavior policy.
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    trajectories: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the drawn confounder level as a `u` column.
    #[arg(long)]
    with_hidden: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    data: PathBuf,
    /// Posterior oracle CSV; the exact posterior of the environment otherwise.
    #[arg(long)]
    oracle: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the density ratio and weights here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Ground-truth cache; `<out-dir>/cache` by default.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            threads: self.threads,
            cache_dir: Some(self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))),
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct AlphaArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct NoiseArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2")]
    sigmas: Vec<f64>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    kind: PlotKind,
    #[arg(long)]
    out: PathBuf,
    /// `ground_truth.json` written by a benchmark run.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn simulate(args: &SimulateArgs) -> Result<serde_json::Value> {
    let cfg = args.cfg.resolve(None)?;
    let spec = cfg.spec().with_confounder_process(mdpuc_ope::harness::process_for_alpha(&cfg.spec(), cfg.alpha))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let pi = args.pi.unwrap_or(cfg.pi_b);
    let policy = PolicySpec::new(cfg.env, pi).tabulate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let data = sample_trajectories(&spec, &policy, args.trajectories, cfg.horizon(), args.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    io::write_dataset(create(&args.out)?, &data, args.with_hidden)?;
    Ok(json!({ "written": args.out, "transitions": data.len(), "trajectories": data.n_trajectories() }))
}

fn estimate(args: &EstimateArgs) -> Result<Vec<serde_json::Value>> {
    let cfg = args.cfg.resolve(None)?;
    let spec = cfg.spec();
    let data = io::read_dataset(BufReader::new(File::open(&args.data).map_err(io_err(&args.data))?))?;
    data.validate_against(&spec).map_err(|e| CliError::Estimation(e.to_string()))?;
    let behavior = PolicySpec::new(cfg.env, cfg.pi_b).tabulate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let eval = PolicySpec::new(cfg.env, cfg.pi_e).tabulate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let oracle = match &args.oracle {
        Some(path) => io::read_oracle(
            BufReader::new(File::open(path).map_err(io_err(path))?),
            spec.n_states(),
            spec.n_actions(),
            spec.n_levels(),
        )?,
        None => exact_posterior(&spec, &behavior).map_err(|e| CliError::Estimation(e.to_string()))?,
    };
    let (results, artifacts) = run_methods(&data, &oracle, &behavior, &eval, &cfg.pipeline(), &cfg.methods, args.seed);
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        if let Some(d) = &artifacts.d_hat {
            io::write_density(create(&dir.join("density.csv"))?, d)?;
        }
        if let Some(w) = &artifacts.weights {
            io::write_weights(create(&dir.join("weights.csv"))?, w, &compress(&data))?;
        }
    }
    let mut out = Vec::new();
    for (method, res) in results {
        match res {
            Ok(est) => out.push(serde_json::to_value(&est).expect("estimates serialize")),
            Err(e) => out.push(json!({ "method": method, "error": e.to_string() })),
        }
    }
    Ok(out)
}

fn write_outputs(report: &BenchmarkReport, dir: &Path, plots: &[(PlotKind, &str)]) -> Result<()> {
    emit_csv(report, &dir.join("report.csv"))?;
    let runs: Vec<RunRow> = report
        .runs
        .iter()
        .map(|r| RunRow { method: r.method, n_traj: r.n_traj, seed: r.seed, estimate: r.estimate })
        .collect();
    io::write_runs(create(&dir.join("runs.csv"))?, &runs)?;
    let mut f = create(&dir.join("failures.csv"))?;
    let fail_err = io_err(dir);
    writeln!(f, "method,n_traj,alpha,sigma,rep,seed,error").map_err(&fail_err)?;
    for x in &report.failures {
        let msg = x.error.replace(['"', '\n'], " ");
        writeln!(f, "{},{},{},{},{},{},\"{}\"", x.method.tag(), x.n_traj, x.alpha, x.sigma, x.rep, x.seed, msg)
            .map_err(&fail_err)?;
    }
    f.flush().map_err(&fail_err)?;
    let gt_path = dir.join("ground_truth.json");
    let text = serde_json::to_string_pretty(&report.ground_truth).expect("ground truth serializes");
    std::fs::write(&gt_path, text + "\n").map_err(io_err(&gt_path))?;
    for (kind, name) in plots {
        emit_plot(report, &dir.join(name), *kind)?;
    }
    Ok(())
}

fn prepare(run: &RunArgs) -> Result<BenchmarkConfig> {
    let cfg = run.cfg.resolve(Some(run.seed))?;
    if run.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    std::fs::create_dir_all(&run.out_dir).map_err(io_err(&run.out_dir))?;
    Ok(cfg)
}

fn summary(report: &BenchmarkReport, dir: &Path) -> serde_json::Value {
    json!({
        "out_dir": dir,
        "rows": report.rows.len(),
        "runs": report.runs.len(),
        "failures": report.failures.len(),
        "ground_truth": report.ground_truth,
    })
}

fn plot(args: &PlotArgs) -> Result<serde_json::Value> {
    let rows = parse_report_csv(BufReader::new(File::open(&args.report).map_err(io_err(&args.report))?))?;
    let ground_truth: Vec<GroundTruth> = match &args.ground_truth {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let report = BenchmarkReport { rows, ground_truth, ..Default::default() };
    emit_plot(&report, &args.out, args.kind)?;
    Ok(json!({ "written": args.out }))
}

fn run(cli: Cli) -> Result<()> {
    let print = |v: serde_json::Value| println!("{v}");
    match cli.command {
        Command::Simulate(a) => print(simulate(&a)?),
        Command::Estimate(a) => estimate(&a)?.into_iter().for_each(print),
        Command::Benchmark(a) => {
            let cfg = prepare(&a.run)?;
            let report = run_benchmark(&cfg, &a.run.options())?;
            write_outputs(&report, &a.run.out_dir, &[(PlotKind::Estimate, "estimate.svg"), (PlotKind::LogRmse, "log_rmse.svg")])?;
            print(summary(&report, &a.run.out_dir));
        }
        Command::SensitivityAlpha(a) => {
            let cfg = prepare(&a.run)?;
            let report = run_sensitivity_alpha(&cfg, &a.alphas, &a.run.options())?;
            write_outputs(&report, &a.run.out_dir, &[(PlotKind::Sensitivity, "sensitivity_alpha.svg")])?;
            print(summary(&report, &a.run.out_dir));
        }
        Command::SensitivityNoise(a) => {
            let cfg = prepare(&a.run)?;
            let report = run_sensitivity_noise(&cfg, &a.sigmas, &a.run.options())?;
            write_outputs(&report, &a.run.out_dir, &[(PlotKind::Sensitivity, "sensitivity_noise.svg")])?;
            print(summary(&report, &a.run.out_dir));
        }
        Command::Plot(a) => print(plot(&a)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::FAILURE
        }
    }
}
