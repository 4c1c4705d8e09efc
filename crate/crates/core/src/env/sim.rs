use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConfounderProcess, Dataset, EnvError, MdpucSpec, PolicyTable, Transition};

/// Inverse-CDF draw from a categorical distribution.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    // x landed in the rounding gap above the final cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Stateful draw of successive confounder levels within one trajectory.
struct ConfounderSampler<'a> {
    process: &'a ConfounderProcess,
    prev: Option<usize>,
}

impl<'a> ConfounderSampler<'a> {
    fn new(process: &'a ConfounderProcess) -> Self {
        Self { process, prev: None }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let u = match (self.process, self.prev) {
            (ConfounderProcess::Iid(p), _) => sample_index(p, rng),
            (ConfounderProcess::Markov(m), None) => sample_index(&m.init, rng),
            (ConfounderProcess::Markov(m), Some(prev)) => sample_index(&m.transition[prev], rng),
            (ConfounderProcess::Mixture { markov, .. }, None) => sample_index(&markov.init, rng),
            (ConfounderProcess::Mixture { alpha, iid, markov }, Some(prev)) => {
                if rng.random::<f64>() < *alpha {
                    sample_index(iid, rng)
                } else {
                    sample_index(&markov.transition[prev], rng)
                }
            }
        };
        self.prev = Some(u);
        u
    }
}

/// Draws `n_traj` trajectories of `horizon` steps each under `policy`.
///
/// The result is a pure function of the arguments; the true confounder
/// levels are kept in the dataset's hidden channel.
pub fn sample_trajectories(
    spec: &MdpucSpec,
    policy: &PolicyTable,
    n_traj: usize,
    horizon: usize,
    seed: u64,
) -> Result<Dataset, EnvError> {
    if n_traj == 0 || horizon == 0 {
        return Err(EnvError::InvalidArgument("n_traj and horizon must be at least 1".into()));
    }
    policy.check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_traj * horizon;
    let mut transitions = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n_traj + 1);
    offsets.push(0);
    for _ in 0..n_traj {
        let mut s = sample_index(spec.start_dist(), &mut rng);
        let mut confounders = ConfounderSampler::new(spec.confounder_process());
        for _ in 0..horizon {
            let u = confounders.next(&mut rng);
            let a = sample_index(policy.action_probs(s, u), &mut rng);
            let s_next = sample_index(spec.transition(s, a, u), &mut rng);
            transitions.push(Transition { s, a, r: spec.reward(s, a, u, s_next), s_next });
            hidden.push(u);
            s = s_next;
        }
        offsets.push(transitions.len());
    }
    Dataset::new(transitions, offsets, Some(hidden))
}

/// Monte Carlo estimate of a long-run average reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloValue {
    pub value: f64,
    /// Batch-means standard error; NaN when only one batch exists.
    pub std_error: f64,
}

const BATCHES_PER_ROLLOUT: usize = 10;

/// Long-run average reward of `policy` by simulation.
///
/// Each rollout discards `burn_in` steps and averages the next `n_steps`
/// rewards. The standard error comes from batch means (ten contiguous
/// batches per rollout).
pub fn true_policy_value(
    spec: &MdpucSpec,
    policy: &PolicyTable,
    burn_in: usize,
    n_steps: usize,
    n_rollouts: usize,
    seed: u64,
) -> Result<MonteCarloValue, EnvError> {
    if n_steps == 0 || n_rollouts == 0 {
        return Err(EnvError::InvalidArgument("n_steps and n_rollouts must be at least 1".into()));
    }
    policy.check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = BATCHES_PER_ROLLOUT.min(n_steps);
    let mut batch_means = Vec::with_capacity(batches * n_rollouts);
    let mut total = 0.0;
    for _ in 0..n_rollouts {
        let mut s = sample_index(spec.start_dist(), &mut rng);
        let mut confounders = ConfounderSampler::new(spec.confounder_process());
        let mut batch_sum = 0.0;
        let mut batch_len = 0usize;
        let mut batch_idx = 0usize;
        for t in 0..burn_in + n_steps {
            let u = confounders.next(&mut rng);
            let a = sample_index(policy.action_probs(s, u), &mut rng);
            let s_next = sample_index(spec.transition(s, a, u), &mut rng);
            if t >= burn_in {
                let r = spec.reward(s, a, u, s_next);
                total += r;
                batch_sum += r;
                batch_len += 1;
                let k = t - burn_in + 1;
                if k == (batch_idx + 1) * n_steps / batches {
                    batch_means.push(batch_sum / batch_len as f64);
                    batch_sum = 0.0;
                    batch_len = 0;
                    batch_idx += 1;
                }
            }
            s = s_next;
        }
    }
    let value = total / (n_steps * n_rollouts) as f64;
    let m = batch_means.len();
    let std_error = if m < 2 {
        f64::NAN
    } else {
        let mean = batch_means.iter().sum::<f64>() / m as f64;
        let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    };
    Ok(MonteCarloValue { value, std_error })
}
