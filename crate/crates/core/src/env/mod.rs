//! Tabular MDPs with an unmeasured per-step confounder.
//!
//! A confounder level `u` is drawn at every step and jointly drives the
//! action probabilities, the transition kernel and the reward. Estimators in
//! this crate only ever see `(s, a, r, s')`; the drawn levels are retained in
//! [`Dataset`] purely so tests can check oracles against them.

mod builders;
mod policy;
mod sim;
mod stationary;

pub use builders::{
    build_gridworld, build_modelwin, grid_cell, grid_state, nonstationary_alt_process, GRID_SIDE,
};
pub use policy::{policy_prob, PolicySpec, PolicyTable};
pub use sim::{sample_trajectories, true_policy_value, MonteCarloValue};
pub(crate) use sim::sample_index;
pub use stationary::{stationary_distribution, StationaryDistribution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("{what} does not sum to 1 (sum = {sum})")]
    NotNormalized { what: String, sum: f64 },
    #[error("{what} has a probability outside [0, 1]: {value}")]
    OutOfRange { what: String, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{kind} id {id} out of range (limit {limit})")]
    InvalidId { kind: &'static str, id: usize, limit: usize },
    #[error("policy parameter pi = {pi} gives action probability {prob} outside [0, 1]")]
    DegeneratePolicy { pi: f64, prob: f64 },
    #[error("policy is tagged for {policy:?} but the environment is {env:?}")]
    EnvMismatch { policy: EnvKind, env: EnvKind },
    #[error("operation requires iid confounders")]
    NotIid,
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Which benchmark an environment (or a policy parametrization) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    ModelWin,
    GridWorld,
    Custom,
}

impl EnvKind {
    pub fn tag(self) -> &'static str {
        match self {
            EnvKind::ModelWin => "modelwin",
            EnvKind::GridWorld => "gridworld",
            EnvKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "modelwin" | "c-modelwin" => Ok(EnvKind::ModelWin),
            "gridworld" => Ok(EnvKind::GridWorld),
            "custom" => Ok(EnvKind::Custom),
            other => Err(EnvError::InvalidArgument(format!("unknown environment tag `{other}`"))),
        }
    }
}

/// First-order Markov chain over confounder levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovProcess {
    pub init: Vec<f64>,
    /// `transition[prev][next]`
    pub transition: Vec<Vec<f64>>,
}

/// How the confounder level is drawn at each step of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConfounderProcess {
    Iid(Vec<f64>),
    Markov(MarkovProcess),
    /// Per-step mixture: with probability `alpha` draw from `iid`, otherwise
    /// from the Markov conditional given the previous level.
    Mixture { alpha: f64, iid: Vec<f64>, markov: MarkovProcess },
}

impl ConfounderProcess {
    /// The iid prior, if the process is exactly iid.
    pub fn iid_probs(&self) -> Option<&[f64]> {
        match self {
            ConfounderProcess::Iid(p) => Some(p),
            ConfounderProcess::Mixture { alpha, iid, .. } if *alpha == 1.0 => Some(iid),
            _ => None,
        }
    }

    fn validate(&self, n_levels: usize) -> Result<(), EnvError> {
        let check_markov = |m: &MarkovProcess| -> Result<(), EnvError> {
            check_distribution("confounder init", &m.init, n_levels)?;
            if m.transition.len() != n_levels {
                return Err(EnvError::Dimension(format!(
                    "confounder transition has {} rows, expected {n_levels}",
                    m.transition.len()
                )));
            }
            for (i, row) in m.transition.iter().enumerate() {
                check_distribution(&format!("confounder transition row {i}"), row, n_levels)?;
            }
            Ok(())
        };
        match self {
            ConfounderProcess::Iid(p) => check_distribution("confounder probs", p, n_levels),
            ConfounderProcess::Markov(m) => check_markov(m),
            ConfounderProcess::Mixture { alpha, iid, markov } => {
                if !(0.0..=1.0).contains(alpha) {
                    return Err(EnvError::OutOfRange { what: "mixture alpha".into(), value: *alpha });
                }
                check_distribution("confounder probs", iid, n_levels)?;
                check_markov(markov)
            }
        }
    }
}

pub(crate) fn check_distribution(what: &str, p: &[f64], len: usize) -> Result<(), EnvError> {
    if p.len() != len {
        return Err(EnvError::Dimension(format!("{what} has length {}, expected {len}", p.len())));
    }
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(EnvError::OutOfRange { what: what.to_string(), value: bad });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(EnvError::NotNormalized { what: what.to_string(), sum });
    }
    Ok(())
}

/// Full tabular description of a confounded MDP.
///
/// Transition rows and rewards are stored flat, indexed by `(s, a, u)` and
/// `(s, a, u, s')` respectively. Rewards are deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpucSpec {
    kind: EnvKind,
    n_states: usize,
    n_actions: usize,
    confounder_values: Vec<f64>,
    transition: Vec<f64>,
    mean_reward: Vec<f64>,
    start_dist: Vec<f64>,
    confounder_process: ConfounderProcess,
}

impl MdpucSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: EnvKind,
        n_states: usize,
        n_actions: usize,
        confounder_values: Vec<f64>,
        transition: Vec<f64>,
        mean_reward: Vec<f64>,
        start_dist: Vec<f64>,
        confounder_process: ConfounderProcess,
    ) -> Result<Self, EnvError> {
        let n_levels = confounder_values.len();
        if n_states == 0 || n_actions == 0 || n_levels == 0 {
            return Err(EnvError::Dimension("empty state, action or confounder space".into()));
        }
        let rows = n_states * n_actions * n_levels;
        if transition.len() != rows * n_states {
            return Err(EnvError::Dimension(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                rows * n_states
            )));
        }
        if mean_reward.len() != rows * n_states {
            return Err(EnvError::Dimension(format!(
                "reward table has {} entries, expected {}",
                mean_reward.len(),
                rows * n_states
            )));
        }
        for (r, row) in transition.chunks(n_states).enumerate() {
            check_distribution(&format!("transition row {r}"), row, n_states)?;
        }
        check_distribution("start distribution", &start_dist, n_states)?;
        confounder_process.validate(n_levels)?;
        Ok(Self {
            kind,
            n_states,
            n_actions,
            confounder_values,
            transition,
            mean_reward,
            start_dist,
            confounder_process,
        })
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_levels(&self) -> usize {
        self.confounder_values.len()
    }

    pub fn confounder_values(&self) -> &[f64] {
        &self.confounder_values
    }

    pub fn start_dist(&self) -> &[f64] {
        &self.start_dist
    }

    pub fn confounder_process(&self) -> &ConfounderProcess {
        &self.confounder_process
    }

    fn row(&self, s: usize, a: usize, u: usize) -> usize {
        (s * self.n_actions + a) * self.n_levels() + u
    }

    /// Distribution of the next state given `(s, a, u)`.
    pub fn transition(&self, s: usize, a: usize, u: usize) -> &[f64] {
        let start = self.row(s, a, u) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize, u: usize, s_next: usize) -> f64 {
        self.mean_reward[self.row(s, a, u) * self.n_states + s_next]
    }

    /// Expected reward of `(s, a, u)`, averaging over the next state.
    pub fn mean_reward(&self, s: usize, a: usize, u: usize) -> f64 {
        self.transition(s, a, u)
            .iter()
            .enumerate()
            .map(|(sn, p)| p * self.reward(s, a, u, sn))
            .sum()
    }

    /// Same environment with a different confounder process.
    pub fn with_confounder_process(&self, process: ConfounderProcess) -> Result<Self, EnvError> {
        process.validate(self.n_levels())?;
        Ok(Self { confounder_process: process, ..self.clone() })
    }

    /// Same environment with a different start distribution.
    pub fn with_start_dist(&self, start_dist: Vec<f64>) -> Result<Self, EnvError> {
        check_distribution("start distribution", &start_dist, self.n_states)?;
        Ok(Self { start_dist, ..self.clone() })
    }

    pub fn check_state(&self, s: usize) -> Result<(), EnvError> {
        check_id("state", s, self.n_states)
    }

    pub fn check_action(&self, a: usize) -> Result<(), EnvError> {
        check_id("action", a, self.n_actions)
    }

    pub fn check_level(&self, u: usize) -> Result<(), EnvError> {
        check_id("confounder level", u, self.n_levels())
    }
}

fn check_id(kind: &'static str, id: usize, limit: usize) -> Result<(), EnvError> {
    if id < limit {
        Ok(())
    } else {
        Err(EnvError::InvalidId { kind, id, limit })
    }
}

/// One logged step `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

impl Transition {
    /// The observed triple `z = (s, a, s')`.
    pub fn z(&self) -> (usize, usize, usize) {
        (self.s, self.a, self.s_next)
    }
}

/// Concatenated logged trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    transitions: Vec<Transition>,
    trajectory_offsets: Vec<usize>,
    hidden: Option<Vec<usize>>,
}

impl Dataset {
    /// `trajectory_offsets` must start at 0, increase strictly and end at the
    /// number of transitions.
    pub fn new(
        transitions: Vec<Transition>,
        trajectory_offsets: Vec<usize>,
        hidden_confounders: Option<Vec<usize>>,
    ) -> Result<Self, EnvError> {
        let n = transitions.len();
        let ok = trajectory_offsets.first() == Some(&0)
            && trajectory_offsets.last() == Some(&n)
            && trajectory_offsets.windows(2).all(|w| w[0] < w[1]);
        if !ok && !(n == 0 && trajectory_offsets == [0]) {
            return Err(EnvError::InvalidArgument(
                "trajectory offsets must start at 0, increase strictly and end at n".into(),
            ));
        }
        if let Some(h) = &hidden_confounders {
            if h.len() != n {
                return Err(EnvError::Dimension(format!(
                    "{} hidden confounders for {n} transitions",
                    h.len()
                )));
            }
        }
        if transitions.iter().any(|t| !t.r.is_finite()) {
            return Err(EnvError::InvalidArgument("non-finite reward".into()));
        }
        Ok(Self { transitions, trajectory_offsets, hidden: hidden_confounders })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn trajectory_offsets(&self) -> &[usize] {
        &self.trajectory_offsets
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectory_offsets.len() - 1
    }

    /// Iterator over trajectories as slices.
    pub fn trajectories(&self) -> impl Iterator<Item = &[Transition]> {
        self.trajectory_offsets.windows(2).map(|w| &self.transitions[w[0]..w[1]])
    }

    /// True confounder levels drawn by the simulator. Test oracles only:
    /// no estimator in this crate reads them.
    pub fn hidden_confounders(&self) -> Option<&[usize]> {
        self.hidden.as_deref()
    }

    pub fn without_hidden(&self) -> Self {
        Self { hidden: None, ..self.clone() }
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.r).sum::<f64>() / self.len() as f64
    }

    /// Checks every id against the environment's ranges.
    pub fn validate_against(&self, spec: &MdpucSpec) -> Result<(), EnvError> {
        for t in &self.transitions {
            spec.check_state(t.s)?;
            spec.check_action(t.a)?;
            spec.check_state(t.s_next)?;
        }
        if let Some(h) = &self.hidden {
            for &u in h {
                spec.check_level(u)?;
            }
        }
        Ok(())
    }
}
