use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::balancing::{BalanceKernel, DEFAULT_BALANCE_LAMBDA};
use crate::density_ratio::GmmHyperparams;
use crate::env::{build_gridworld, build_modelwin, EnvKind, MdpucSpec, PolicySpec};
use crate::estimators::{AbsentCellPolicy, Method, PipelineConfig};

/// Experiment protocol for one benchmark sweep. Field names double as the
/// TOML config keys; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub env: EnvKind,
    pub pi_b: f64,
    pub pi_e: f64,
    /// Steps per trajectory; 100 on ModelWin and 200 on GridWorld when unset.
    pub horizon: Option<usize>,
    pub n_traj_grid: Vec<usize>,
    pub repetitions: usize,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub noise_sigma: f64,

    pub lambda_h: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub gmm_iterations: usize,
    pub clip_negative: bool,
    pub balance_lambda: f64,
    pub kernel_ws: f64,
    pub kernel_wu: f64,
    pub kernel_wsu: f64,
    pub absent_cells: AbsentCellPolicy,

    pub master_seed: u64,

    /// Ground-truth rollout: discarded steps, kept steps and rollouts.
    pub gt_burn_in: usize,
    pub gt_steps: usize,
    pub gt_rollouts: usize,
    /// ASD sampling: triples and noise draws per triple.
    pub asd_triples: usize,
    pub asd_draws: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let gmm = GmmHyperparams::default();
        let kernel = BalanceKernel::default();
        Self {
            env: EnvKind::ModelWin,
            pi_b: 0.7,
            pi_e: 0.1,
            horizon: None,
            n_traj_grid: vec![10, 25, 50, 100, 200],
            repetitions: 50,
            methods: Method::ALL.to_vec(),
            alpha: 1.0,
            noise_sigma: 0.0,
            lambda_h: gmm.lambda_h,
            lambda_d: gmm.lambda_d,
            lambda_c: gmm.lambda_c,
            gmm_iterations: gmm.n_iterations,
            clip_negative: gmm.clip_negative,
            balance_lambda: DEFAULT_BALANCE_LAMBDA,
            kernel_ws: kernel.w_s,
            kernel_wu: kernel.w_u,
            kernel_wsu: kernel.w_su,
            absent_cells: AbsentCellPolicy::default(),
            master_seed: 0,
            gt_burn_in: 1_000,
            gt_steps: 100_000,
            gt_rollouts: 10,
            asd_triples: 5,
            asd_draws: 50,
        }
    }
}

impl BenchmarkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.env {
            EnvKind::GridWorld => 200,
            _ => 100,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.env == EnvKind::Custom {
            return bad("benchmarks run on modelwin or gridworld".into());
        }
        if self.n_traj_grid.is_empty() || self.n_traj_grid.contains(&0) {
            return bad("n_traj_grid must be nonempty with positive entries".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        if self.horizon() == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma));
        }
        if self.gt_steps == 0 || self.gt_rollouts == 0 {
            return bad("gt_steps and gt_rollouts must be at least 1".into());
        }
        if self.asd_triples == 0 || self.asd_draws < 2 {
            return bad("asd_triples must be >= 1 and asd_draws >= 2".into());
        }
        self.pipeline().gmm.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.pipeline().kernel.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if !(self.balance_lambda > 0.0 && self.balance_lambda.is_finite()) {
            return bad(format!("balance_lambda must be positive, got {}", self.balance_lambda));
        }
        let spec = self.spec();
        for pi in [self.pi_b, self.pi_e] {
            PolicySpec::new(self.env, pi).tabulate(&spec).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// The nominal (iid) environment.
    pub fn spec(&self) -> MdpucSpec {
        match self.env {
            EnvKind::GridWorld => build_gridworld(),
            _ => build_modelwin(),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            gmm: GmmHyperparams {
                lambda_h: self.lambda_h,
                lambda_d: self.lambda_d,
                lambda_c: self.lambda_c,
                n_iterations: self.gmm_iterations,
                clip_negative: self.clip_negative,
                ..GmmHyperparams::default()
            },
            balance_lambda: self.balance_lambda,
            kernel: BalanceKernel { w_s: self.kernel_ws, w_u: self.kernel_wu, w_su: self.kernel_wsu },
            absent_cells: self.absent_cells,
        }
    }
}
