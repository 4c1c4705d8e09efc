use super::{EnvError, MdpucSpec, PolicyTable};

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500_000;

/// Stationary law of the `(s, u, a)` chain under iid confounders.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    n_states: usize,
    n_levels: usize,
    n_actions: usize,
    joint: Vec<f64>,
    state_marginal: Vec<f64>,
}

impl StationaryDistribution {
    /// Probability of `(s, u, a)`.
    pub fn joint(&self, s: usize, u: usize, a: usize) -> f64 {
        self.joint[(s * self.n_levels + u) * self.n_actions + a]
    }

    pub fn joint_vector(&self) -> &[f64] {
        &self.joint
    }

    pub fn state_marginal(&self) -> &[f64] {
        &self.state_marginal
    }

    /// Joint law of `(s, u, a, s')`, flat-indexed `((s*U + u)*A + a)*S + s'`.
    pub fn transition_joint(&self, spec: &MdpucSpec) -> Vec<f64> {
        let n_s = self.n_states;
        let mut out = vec![0.0; self.joint.len() * n_s];
        for s in 0..n_s {
            for u in 0..self.n_levels {
                for a in 0..self.n_actions {
                    let p = self.joint(s, u, a);
                    let idx = (s * self.n_levels + u) * self.n_actions + a;
                    for (sn, q) in spec.transition(s, a, u).iter().enumerate() {
                        out[idx * n_s + sn] = p * q;
                    }
                }
            }
        }
        out
    }

    /// Law of the observed triple `z = (s, a, s')`, flat-indexed
    /// `(s*A + a)*S + s'`.
    pub fn z_distribution(&self, spec: &MdpucSpec) -> Vec<f64> {
        let n_s = self.n_states;
        let mut out = vec![0.0; n_s * self.n_actions * n_s];
        for s in 0..n_s {
            for u in 0..self.n_levels {
                for a in 0..self.n_actions {
                    let p = self.joint(s, u, a);
                    if p == 0.0 {
                        continue;
                    }
                    for (sn, q) in spec.transition(s, a, u).iter().enumerate() {
                        out[(s * self.n_actions + a) * n_s + sn] += p * q;
                    }
                }
            }
        }
        out
    }

    /// Exact long-run average reward of the chain.
    pub fn average_reward(&self, spec: &MdpucSpec) -> f64 {
        let mut v = 0.0;
        for s in 0..self.n_states {
            for u in 0..self.n_levels {
                for a in 0..self.n_actions {
                    v += self.joint(s, u, a) * spec.mean_reward(s, a, u);
                }
            }
        }
        v
    }
}

/// Sparse row-stochastic matrix over `(s, u, a)`.
struct Chain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Chain {
    fn build(spec: &MdpucSpec, policy: &PolicyTable, prior: &[f64]) -> Self {
        let (n_s, n_u, n_a) = (spec.n_states(), spec.n_levels(), spec.n_actions());
        let mut rows = Vec::with_capacity(n_s * n_u * n_a);
        for s in 0..n_s {
            for u in 0..n_u {
                for a in 0..n_a {
                    let mut row = Vec::new();
                    for (sn, &q) in spec.transition(s, a, u).iter().enumerate() {
                        if q == 0.0 {
                            continue;
                        }
                        for (un, &pu) in prior.iter().enumerate() {
                            for an in 0..n_a {
                                let w = q * pu * policy.prob(sn, un, an);
                                if w > 0.0 {
                                    row.push(((sn * n_u + un) * n_a + an, w));
                                }
                            }
                        }
                    }
                    rows.push(row);
                }
            }
        }
        Self { rows }
    }

    /// `out = p^T P`
    fn left_multiply(&self, p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let pi = p[i];
            if pi == 0.0 {
                continue;
            }
            for &(j, w) in row {
                out[j] += pi * w;
            }
        }
    }
}

/// State-to-state kernel `Σ_u p(u) Σ_a π(a|s,u) P(s'|s,a,u)`, dense row-major.
fn state_kernel(spec: &MdpucSpec, policy: &PolicyTable, prior: &[f64]) -> Vec<f64> {
    let (n_s, n_a) = (spec.n_states(), spec.n_actions());
    let mut p = vec![0.0; n_s * n_s];
    for s in 0..n_s {
        for (u, &pu) in prior.iter().enumerate() {
            for a in 0..n_a {
                let w = pu * policy.prob(s, u, a);
                if w == 0.0 {
                    continue;
                }
                for (sn, q) in spec.transition(s, a, u).iter().enumerate() {
                    p[s * n_s + sn] += w * q;
                }
            }
        }
    }
    p
}

/// Grassmann-Taksar-Heyman elimination. Subtraction-free, so tiny stationary
/// masses keep full relative precision. Returns `None` for reducible chains.
fn gth(mut p: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| p[k * n + j]).sum();
        if !(s > 0.0) {
            return None;
        }
        for i in 0..k {
            p[i * n + k] /= s;
        }
        for i in 0..k {
            let pik = p[i * n + k];
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                p[i * n + j] += pik * p[k * n + j];
            }
        }
    }
    let mut mu = vec![0.0; n];
    mu[0] = 1.0;
    for k in 1..n {
        mu[k] = (0..k).map(|i| mu[i] * p[i * n + k]).sum();
    }
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    Some(mu)
}

/// Lazy power iteration `(I + P) / 2` on the `(s, u, a)` chain; the lazy
/// chain shares `P`'s stationary vector but is aperiodic.
fn power_iteration(chain: &Chain) -> Result<Vec<f64>, EnvError> {
    let dim = chain.rows.len();
    let mut p = vec![1.0 / dim as f64; dim];
    let mut next = vec![0.0; dim];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        chain.left_multiply(&p, &mut next);
        residual = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual <= RESIDUAL_TOL {
            return Ok(p);
        }
        for (pi, ni) in p.iter_mut().zip(&next) {
            *pi = 0.5 * (*pi + ni);
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
    }
    Err(EnvError::NoConvergence { iterations: MAX_ITERATIONS, residual })
}

/// Stationary distribution of the `(s, u, a)` chain induced by `policy`.
///
/// Under iid confounders the state sequence is itself a Markov chain, so the
/// state marginal is solved exactly on it by GTH elimination and the joint is
/// `μ(s) p(u) π(a|s,u)`. Chains that are not irreducible fall back to lazy
/// power iteration on the full chain, stopped at `‖pᵀP − pᵀ‖∞ ≤ 1e-12`.
pub fn stationary_distribution(
    spec: &MdpucSpec,
    policy: &PolicyTable,
) -> Result<StationaryDistribution, EnvError> {
    let prior = spec.confounder_process().iid_probs().ok_or(EnvError::NotIid)?;
    policy.check_spec(spec)?;
    let (n_s, n_u, n_a) = (spec.n_states(), spec.n_levels(), spec.n_actions());
    let joint = match gth(state_kernel(spec, policy, prior), n_s) {
        Some(mu) => {
            let mut joint = vec![0.0; n_s * n_u * n_a];
            for s in 0..n_s {
                for u in 0..n_u {
                    for a in 0..n_a {
                        joint[(s * n_u + u) * n_a + a] = mu[s] * prior[u] * policy.prob(s, u, a);
                    }
                }
            }
            joint
        }
        None => power_iteration(&Chain::build(spec, policy, prior))?,
    };
    let mut state_marginal = vec![0.0; n_s];
    for s in 0..n_s {
        state_marginal[s] = joint[s * n_u * n_a..(s + 1) * n_u * n_a].iter().sum();
    }
    Ok(StationaryDistribution { n_states: n_s, n_levels: n_u, n_actions: n_a, joint, state_marginal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        build_gridworld, build_modelwin, sample_trajectories, ConfounderProcess, EnvKind,
        PolicySpec,
    };

    fn check_fixed_point(spec: &MdpucSpec, policy: &PolicyTable) -> StationaryDistribution {
        let dist = stationary_distribution(spec, policy).unwrap();
        let sum: f64 = dist.joint_vector().iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
        let chain = Chain::build(spec, policy, spec.confounder_process().iid_probs().unwrap());
        let mut next = vec![0.0; dist.joint_vector().len()];
        chain.left_multiply(dist.joint_vector(), &mut next);
        let res = next
            .iter()
            .zip(dist.joint_vector())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(res <= 1e-10, "residual {res}");
        dist
    }

    #[test]
    fn modelwin_fixed_point() {
        let spec = build_modelwin();
        for pi in [0.1, 0.7] {
            let pol = PolicySpec::new(EnvKind::ModelWin, pi).tabulate(&spec).unwrap();
            let dist = check_fixed_point(&spec, &pol);
            // the hub is visited every other step
            assert!((dist.state_marginal()[0] - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn gridworld_fixed_point() {
        let spec = build_gridworld();
        for pi in [0.1, 0.7] {
            let pol = PolicySpec::new(EnvKind::GridWorld, pi).tabulate(&spec).unwrap();
            check_fixed_point(&spec, &pol);
        }
    }

    #[test]
    fn identical_policies_give_unit_ratio() {
        let spec = build_modelwin();
        let pol = PolicySpec::new(EnvKind::ModelWin, 0.7).tabulate(&spec).unwrap();
        let a = stationary_distribution(&spec, &pol).unwrap();
        let b = stationary_distribution(&spec, &pol).unwrap();
        for s in 0..3 {
            assert!((a.state_marginal()[s] / b.state_marginal()[s] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_iid_process() {
        let spec = build_modelwin()
            .with_confounder_process(crate::env::nonstationary_alt_process(0.5))
            .unwrap();
        let pol = PolicySpec::new(EnvKind::ModelWin, 0.7).tabulate(&spec).unwrap();
        assert_eq!(stationary_distribution(&spec, &pol), Err(EnvError::NotIid));
    }

    #[test]
    fn empirical_visits_match_marginal() {
        let spec = build_gridworld();
        let pol = PolicySpec::new(EnvKind::GridWorld, 0.1).tabulate(&spec).unwrap();
        let dist = stationary_distribution(&spec, &pol).unwrap();
        let data = sample_trajectories(&spec, &pol, 1, 1_000_000, 21).unwrap();
        let mut freq = vec![0.0; spec.n_states()];
        for t in data.transitions() {
            freq[t.s] += 1.0;
        }
        let n = data.len() as f64;
        let tv: f64 = freq
            .iter()
            .zip(dist.state_marginal())
            .map(|(f, p)| (f / n - p).abs())
            .sum::<f64>()
            * 0.5;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn gth_agrees_with_power_iteration() {
        for spec in [build_modelwin(), build_gridworld()] {
            let pol = PolicySpec::new(spec.kind(), 0.7).tabulate(&spec).unwrap();
            let exact = stationary_distribution(&spec, &pol).unwrap();
            let chain = Chain::build(&spec, &pol, spec.confounder_process().iid_probs().unwrap());
            let iterated = power_iteration(&chain).unwrap();
            let diff = exact
                .joint_vector()
                .iter()
                .zip(&iterated)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-8, "{diff}");
        }
    }

    #[test]
    fn reducible_chain_uses_power_iteration() {
        // absorbing at s1 and s2 under every action: only s0 is transient
        let spec = build_modelwin();
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for s in 0..3 {
            for a in 0..2 {
                for u in 0..2 {
                    let row = if s == 0 { spec.transition(s, a, u).to_vec() } else {
                        let mut r = vec![0.0; 3];
                        r[s] = 1.0;
                        r
                    };
                    transition.extend(row);
                    reward.extend((0..3).map(|sn| spec.reward(s, a, u, sn)));
                }
            }
        }
        let absorbing = MdpucSpec::new(
            EnvKind::Custom,
            3,
            2,
            spec.confounder_values().to_vec(),
            transition,
            reward,
            spec.start_dist().to_vec(),
            spec.confounder_process().clone(),
        )
        .unwrap();
        let pol = PolicySpec::new(EnvKind::ModelWin, 0.7).tabulate(&spec).unwrap();
        let dist = stationary_distribution(&absorbing, &pol).unwrap();
        assert!(dist.state_marginal()[0] < 1e-9);
    }

    #[test]
    fn average_reward_of_constant_chain() {
        let spec = build_modelwin()
            .with_confounder_process(ConfounderProcess::Iid(vec![0.0, 1.0]))
            .unwrap();
        let pol = PolicyTable::from_fn(3, 2, 2, |_, _, a| if a == 0 { 1.0 } else { 0.0 }).unwrap();
        let dist = stationary_distribution(&spec, &pol).unwrap();
        // a0 with u = 0.2 reaches s1 w.p. 0.9: (0.9 * 14 - 0.1 * 14) / 2
        assert!((dist.average_reward(&spec) - 5.6).abs() < 1e-10);
    }
}
