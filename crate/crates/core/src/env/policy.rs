use serde::{Deserialize, Serialize};

use super::{grid_cell, EnvError, EnvKind, MdpucSpec};

/// A benchmark policy, parametrized by a single scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub env: EnvKind,
    pub pi: f64,
}

impl PolicySpec {
    pub fn new(env: EnvKind, pi: f64) -> Self {
        Self { env, pi }
    }

    /// Tabulates the policy over every `(s, u, a)` of `spec`, validating that
    /// each induced distribution is proper.
    pub fn tabulate(&self, spec: &MdpucSpec) -> Result<PolicyTable, EnvError> {
        if self.env != spec.kind() {
            return Err(EnvError::EnvMismatch { policy: self.env, env: spec.kind() });
        }
        let (n_s, n_u, n_a) = (spec.n_states(), spec.n_levels(), spec.n_actions());
        let mut probs = Vec::with_capacity(n_s * n_u * n_a);
        for s in 0..n_s {
            for u in 0..n_u {
                let row = self.action_probs(spec, s, spec.confounder_values()[u])?;
                probs.extend_from_slice(&row);
            }
        }
        PolicyTable::new(n_s, n_u, n_a, probs)
    }

    fn action_probs(&self, spec: &MdpucSpec, s: usize, u: f64) -> Result<Vec<f64>, EnvError> {
        let pi = self.pi;
        let probs = match self.env {
            EnvKind::ModelWin => vec![1.0 - pi - u, pi + u],
            EnvKind::GridWorld => {
                let (row, col) = grid_cell(s);
                let toward_origin = pi + u;
                let toward_goal = 1.0 - toward_origin;
                let down = 0.5 * pi + u;
                let up_given_goal = if row < col {
                    pi + u
                } else if row > col {
                    1.0 - pi - u
                } else {
                    0.5 * pi + 0.5 * u
                };
                for stage in [toward_origin, down, up_given_goal] {
                    check_prob(pi, stage)?;
                }
                vec![
                    toward_goal * up_given_goal,
                    toward_goal * (1.0 - up_given_goal),
                    toward_origin * down,
                    toward_origin * (1.0 - down),
                ]
            }
            EnvKind::Custom => {
                return Err(EnvError::InvalidArgument(
                    "custom environments need an explicit PolicyTable".into(),
                ))
            }
        };
        debug_assert_eq!(probs.len(), spec.n_actions());
        for &p in &probs {
            check_prob(pi, p)?;
        }
        Ok(probs)
    }
}

fn check_prob(pi: f64, prob: f64) -> Result<(), EnvError> {
    if (0.0..=1.0).contains(&prob) {
        Ok(())
    } else {
        Err(EnvError::DegeneratePolicy { pi, prob })
    }
}

/// Probability that `policy` takes action `a` in state `s` under confounder
/// level `u`.
pub fn policy_prob(
    policy: &PolicySpec,
    spec: &MdpucSpec,
    s: usize,
    u: usize,
    a: usize,
) -> Result<f64, EnvError> {
    if policy.env != spec.kind() {
        return Err(EnvError::EnvMismatch { policy: policy.env, env: spec.kind() });
    }
    spec.check_state(s)?;
    spec.check_level(u)?;
    spec.check_action(a)?;
    let probs = policy.action_probs(spec, s, spec.confounder_values()[u])?;
    Ok(probs[a])
}

/// Explicit action probabilities indexed by `(s, u, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_levels: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(
        n_states: usize,
        n_levels: usize,
        n_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self, EnvError> {
        if probs.len() != n_states * n_levels * n_actions {
            return Err(EnvError::Dimension(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_levels * n_actions
            )));
        }
        for (i, row) in probs.chunks(n_actions).enumerate() {
            super::check_distribution(&format!("policy row {i}"), row, n_actions)?;
        }
        Ok(Self { n_states, n_levels, n_actions, probs })
    }

    /// Builds a table from a closure over `(s, u, a)`.
    pub fn from_fn(
        n_states: usize,
        n_levels: usize,
        n_actions: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self, EnvError> {
        let mut probs = Vec::with_capacity(n_states * n_levels * n_actions);
        for s in 0..n_states {
            for u in 0..n_levels {
                for a in 0..n_actions {
                    probs.push(f(s, u, a));
                }
            }
        }
        Self::new(n_states, n_levels, n_actions, probs)
    }

    #[inline]
    pub fn prob(&self, s: usize, u: usize, a: usize) -> f64 {
        self.probs[(s * self.n_levels + u) * self.n_actions + a]
    }

    pub fn action_probs(&self, s: usize, u: usize) -> &[f64] {
        let start = (s * self.n_levels + u) * self.n_actions;
        &self.probs[start..start + self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Whether the table's dimensions match the environment's.
    pub fn check_spec(&self, spec: &MdpucSpec) -> Result<(), EnvError> {
        if (self.n_states, self.n_levels, self.n_actions)
            != (spec.n_states(), spec.n_levels(), spec.n_actions())
        {
            return Err(EnvError::Dimension(format!(
                "policy table is {}x{}x{}, environment is {}x{}x{}",
                self.n_states,
                self.n_levels,
                self.n_actions,
                spec.n_states(),
                spec.n_levels(),
                spec.n_actions()
            )));
        }
        Ok(())
    }
}
