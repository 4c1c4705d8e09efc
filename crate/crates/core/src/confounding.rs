//! Posterior of the hidden confounder given an observed triple
//! `z = (s, a, s')`, its noisy variants, and the derived importance ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::env::{stationary_distribution, Dataset, EnvError, MdpucSpec, PolicyTable};

/// Floor applied to probabilities before taking logs.
pub const LOGIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfoundingError {
    #[error("observed triple (s={s}, a={a}, s'={s_next}) has zero probability under the model")]
    Unreachable { s: usize, a: usize, s_next: usize },
    #[error("behavior policy gives zero probability to action {a} in state {s} at level {u}")]
    Overlap { s: usize, a: usize, u: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

type Result<T> = std::result::Result<T, ConfoundingError>;

/// Categorical posterior over confounder levels for each reachable `z`.
///
/// Unreachable triples are stored as absent; querying one is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorOracle {
    n_states: usize,
    n_actions: usize,
    n_levels: usize,
    probs: Vec<f64>,
    reachable: Vec<bool>,
}

impl PosteriorOracle {
    /// Empty oracle with every triple unreachable.
    pub fn empty(n_states: usize, n_actions: usize, n_levels: usize) -> Self {
        let nz = n_states * n_actions * n_states;
        Self {
            n_states,
            n_actions,
            n_levels,
            probs: vec![0.0; nz * n_levels],
            reachable: vec![false; nz],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    fn z_index(&self, s: usize, a: usize, s_next: usize) -> Option<usize> {
        (s < self.n_states && a < self.n_actions && s_next < self.n_states)
            .then(|| (s * self.n_actions + a) * self.n_states + s_next)
    }

    /// Sets the posterior of one triple. `dist` must be a distribution over
    /// the oracle's levels (sum 1 within 1e-10, entries nonnegative).
    pub fn set(&mut self, s: usize, a: usize, s_next: usize, dist: &[f64]) -> Result<()> {
        let z = self
            .z_index(s, a, s_next)
            .ok_or_else(|| ConfoundingError::InvalidArgument(format!("triple ({s},{a},{s_next}) out of range")))?;
        if dist.len() != self.n_levels {
            return Err(ConfoundingError::InvalidArgument(format!(
                "posterior has {} levels, expected {}",
                dist.len(),
                self.n_levels
            )));
        }
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
            return Err(ConfoundingError::InvalidArgument(format!(
                "posterior for ({s},{a},{s_next}) is not a distribution"
            )));
        }
        self.probs[z * self.n_levels..(z + 1) * self.n_levels].copy_from_slice(dist);
        self.reachable[z] = true;
        Ok(())
    }

    /// Posterior of `u` given `z`, or `None` when `z` is unreachable.
    pub fn get(&self, s: usize, a: usize, s_next: usize) -> Option<&[f64]> {
        let z = self.z_index(s, a, s_next)?;
        self.reachable[z].then(|| &self.probs[z * self.n_levels..(z + 1) * self.n_levels])
    }

    pub fn posterior(&self, s: usize, a: usize, s_next: usize) -> Result<&[f64]> {
        self.get(s, a, s_next).ok_or(ConfoundingError::Unreachable { s, a, s_next })
    }

    /// Reachable triples with their posteriors, in index order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize, usize), &[f64])> {
        let (n_s, n_a, n_l) = (self.n_states, self.n_actions, self.n_levels);
        self.reachable.iter().enumerate().filter(|(_, r)| **r).map(move |(z, _)| {
            let s_next = z % n_s;
            let a = (z / n_s) % n_a;
            let s = z / (n_s * n_a);
            ((s, a, s_next), &self.probs[z * n_l..(z + 1) * n_l])
        })
    }

    /// Errors on the first dataset triple the oracle cannot answer.
    pub fn check_covers(&self, data: &Dataset) -> Result<()> {
        for t in data.transitions() {
            self.posterior(t.s, t.a, t.s_next)?;
        }
        Ok(())
    }
}

/// Exact posterior `φ(u | s, a, s') ∝ prior(u) π_b(a | s, u) P(s' | s, a, u)`
/// under the environment's iid confounder prior.
pub fn exact_posterior(spec: &MdpucSpec, behavior: &PolicyTable) -> Result<PosteriorOracle> {
    let prior = spec.confounder_process().iid_probs().ok_or(EnvError::NotIid)?;
    behavior.check_spec(spec)?;
    let (n_s, n_a, n_u) = (spec.n_states(), spec.n_actions(), spec.n_levels());
    let mut oracle = PosteriorOracle::empty(n_s, n_a, n_u);
    let mut w = vec![0.0; n_u];
    for s in 0..n_s {
        for a in 0..n_a {
            for s_next in 0..n_s {
                for (u, wu) in w.iter_mut().enumerate() {
                    *wu = prior[u] * behavior.prob(s, u, a) * spec.transition(s, a, u)[s_next];
                }
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    let z = (s * n_a + a) * n_s + s_next;
                    for (u, wu) in w.iter().enumerate() {
                        oracle.probs[z * n_u + u] = wu / total;
                    }
                    oracle.reachable[z] = true;
                }
            }
        }
    }
    Ok(oracle)
}

/// Log-probabilities with zeros floored at [`LOGIT_FLOOR`].
pub fn logits(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&x| x.max(LOGIT_FLOOR).ln()).collect()
}

/// Adds `noise` to `logits` and maps back to a distribution (softmax).
pub fn perturb_logits(logits: &[f64], noise: &[f64]) -> Vec<f64> {
    let shifted: Vec<f64> = logits.iter().zip(noise).map(|(l, e)| l + e).collect();
    let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = shifted.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / total).collect()
}

fn normal_vector<R: Rng>(rng: &mut R, len: usize, sigma: f64) -> Vec<f64> {
    (0..len).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Perturbs every posterior independently with spherical Gaussian noise of
/// standard deviation `sigma` on its logits. `sigma = 0` returns a copy.
pub fn inject_logit_noise(oracle: &PosteriorOracle, sigma: f64, seed: u64) -> Result<PosteriorOracle> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(ConfoundingError::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(oracle.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = oracle.clone();
    let n_l = oracle.n_levels;
    for z in 0..oracle.reachable.len() {
        if !oracle.reachable[z] {
            continue;
        }
        let p = &oracle.probs[z * n_l..(z + 1) * n_l];
        let noise = normal_vector(&mut rng, n_l, sigma);
        let q = perturb_logits(&logits(p), &noise);
        out.probs[z * n_l..(z + 1) * n_l].copy_from_slice(&q);
    }
    Ok(out)
}

/// Average standard deviation of noisy posteriors.
///
/// Draws `n_s` triples from the behavior policy's stationary law of `z`, then
/// `n_e` noise vectors per triple, and averages over triples and levels the
/// sample standard deviation (denominator `n_e - 1`) of each perturbed
/// probability.
pub fn asd(
    spec: &MdpucSpec,
    behavior: &PolicyTable,
    sigma: f64,
    n_s: usize,
    n_e: usize,
    seed: u64,
) -> Result<f64> {
    if n_s < 1 || n_e < 2 {
        return Err(ConfoundingError::InvalidArgument("ASD needs n_s >= 1 and n_e >= 2".into()));
    }
    if !(sigma >= 0.0) {
        return Err(ConfoundingError::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let oracle = exact_posterior(spec, behavior)?;
    if sigma == 0.0 {
        // noiseless oracles are returned unchanged by `inject_logit_noise`
        return Ok(0.0);
    }
    let z_dist = stationary_distribution(spec, behavior)?.z_distribution(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_l = oracle.n_levels;
    let mut total = 0.0;
    for _ in 0..n_s {
        let z = crate::env::sample_index(&z_dist, &mut rng);
        if !oracle.reachable[z] {
            let (s, a, s_next) = (z / (spec.n_actions() * spec.n_states()), (z / spec.n_states()) % spec.n_actions(), z % spec.n_states());
            return Err(ConfoundingError::Unreachable { s, a, s_next });
        }
        let base = logits(&oracle.probs[z * n_l..(z + 1) * n_l]);
        let draws: Vec<Vec<f64>> = (0..n_e)
            .map(|_| perturb_logits(&base, &normal_vector(&mut rng, n_l, sigma)))
            .collect();
        for u in 0..n_l {
            let mean = draws.iter().map(|d| d[u]).sum::<f64>() / n_e as f64;
            let var = draws.iter().map(|d| (d[u] - mean).powi(2)).sum::<f64>() / (n_e - 1) as f64;
            total += var.sqrt();
        }
    }
    Ok(total / (n_s * n_l) as f64)
}

/// Posterior-averaged importance ratio per reachable `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<Option<f64>>,
}

impl BetaTable {
    pub fn get(&self, s: usize, a: usize, s_next: usize) -> Option<f64> {
        if s >= self.n_states || a >= self.n_actions || s_next >= self.n_states {
            return None;
        }
        self.values[(s * self.n_actions + a) * self.n_states + s_next]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// `β(z) = Σ_u φ(u | z) π_e(a | s, u) / π_b(a | s, u)`.
///
/// Levels with zero posterior mass are skipped; a level with positive mass
/// but zero behavior probability is an overlap violation.
pub fn beta_table(
    oracle: &PosteriorOracle,
    eval: &PolicyTable,
    behavior: &PolicyTable,
) -> Result<BetaTable> {
    let dims = (oracle.n_states, oracle.n_levels, oracle.n_actions);
    for table in [eval, behavior] {
        if (table.n_states(), table.n_levels(), table.n_actions()) != dims {
            return Err(ConfoundingError::InvalidArgument(
                "policy table dimensions do not match the oracle".into(),
            ));
        }
    }
    let mut values = vec![None; oracle.reachable.len()];
    for ((s, a, s_next), phi) in oracle.entries() {
        let mut beta = 0.0;
        for (u, &w) in phi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let pb = behavior.prob(s, u, a);
            if pb <= 0.0 {
                return Err(ConfoundingError::Overlap { s, a, u });
            }
            beta += w * eval.prob(s, u, a) / pb;
        }
        values[(s * oracle.n_actions + a) * oracle.n_states + s_next] = Some(beta);
    }
    Ok(BetaTable { n_states: oracle.n_states, n_actions: oracle.n_actions, values })
}

/// Draws `û_i ~ φ(· | z_i)` independently for each transition.
pub fn impute_confounders(oracle: &PosteriorOracle, data: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.transitions()
        .iter()
        .map(|t| {
            let phi = oracle.posterior(t.s, t.a, t.s_next)?;
            Ok(crate::env::sample_index(phi, &mut rng))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_gridworld, build_modelwin, sample_trajectories, EnvKind, PolicySpec, Transition};

    fn modelwin_policies() -> (MdpucSpec, PolicyTable, PolicyTable) {
        let spec = build_modelwin();
        let b = PolicySpec::new(EnvKind::ModelWin, 0.7).tabulate(&spec).unwrap();
        let e = PolicySpec::new(EnvKind::ModelWin, 0.1).tabulate(&spec).unwrap();
        (spec, b, e)
    }

    #[test]
    fn worked_posterior_example() {
        let (spec, b, _) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        let phi = oracle.posterior(0, 0, 1).unwrap();
        // (0.3 * 0.2 * 0.8, 0.7 * 0.1 * 0.9) normalized
        let expect = [0.048 / 0.111, 0.063 / 0.111];
        assert!((phi[0] - expect[0]).abs() < 1e-12);
        assert!((phi[1] - expect[1]).abs() < 1e-12);
        assert!((phi[0] - 0.4324).abs() < 1e-4);
    }

    #[test]
    fn uninformative_likelihood_returns_prior() {
        // actions and transitions independent of u
        let spec = build_gridworld();
        let flat = PolicyTable::from_fn(100, 2, 4, |_, _, _| 0.25).unwrap();
        let oracle = exact_posterior(&spec, &flat).unwrap();
        for (_, phi) in oracle.entries() {
            assert!((phi[0] - 0.3).abs() < 1e-12 && (phi[1] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_triples_are_absent() {
        let (spec, b, _) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        assert_eq!(
            oracle.posterior(0, 0, 0),
            Err(ConfoundingError::Unreachable { s: 0, a: 0, s_next: 0 })
        );
        assert!(oracle.get(1, 0, 2).is_none());
        assert_eq!(oracle.entries().count(), 8);
        for (_, phi) in oracle.entries() {
            assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let (spec, b, _) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        assert_eq!(inject_logit_noise(&oracle, 0.0, 3).unwrap(), oracle);
        assert!(inject_logit_noise(&oracle, -1.0, 3).is_err());
    }

    #[test]
    fn noisy_posteriors_stay_normalized() {
        let (spec, b, _) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        for sigma in [0.1, 1.0, 10.0, 50.0] {
            let noisy = inject_logit_noise(&oracle, sigma, 11).unwrap();
            for (_, phi) in noisy.entries() {
                assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(phi.iter().all(|p| *p >= 0.0));
            }
        }
    }

    #[test]
    fn large_noise_saturates() {
        let (spec, b, _) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        let mut extreme = 0usize;
        let trials = 2_000;
        for seed in 0..trials {
            let noisy = inject_logit_noise(&oracle, 10.0, seed).unwrap();
            let p = noisy.posterior(0, 0, 1).unwrap()[0];
            if !(0.05..=0.95).contains(&p) {
                extreme += 1;
            }
        }
        // P(|N(logit gap, 10 sqrt 2)| > logit(0.95) - gap) is about 0.83
        let frac = extreme as f64 / trials as f64;
        assert!(frac > 0.78, "saturated fraction {frac}");
    }

    #[test]
    fn logit_gauge_invariance() {
        let p = [0.2, 0.5, 0.3];
        let noise = [0.4, -1.3, 0.7];
        let base = logits(&p);
        let shifted: Vec<f64> = base.iter().map(|l| l + 17.5).collect();
        let a = perturb_logits(&base, &noise);
        let b = perturb_logits(&shifted, &noise);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let back = perturb_logits(&base, &[0.0; 3]);
        for (x, y) in back.iter().zip(&p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn asd_basic_properties() {
        let (spec, b, _) = modelwin_policies();
        assert_eq!(asd(&spec, &b, 0.0, 5, 50, 1).unwrap(), 0.0);
        let big = asd(&spec, &b, 20.0, 5, 50, 1).unwrap();
        assert!(big > 0.0 && big <= 0.5);
        assert!(asd(&spec, &b, 1.0, 0, 50, 1).is_err());
        assert!(asd(&spec, &b, 1.0, 5, 1, 1).is_err());
    }

    #[test]
    fn asd_nondecreasing_in_sigma() {
        let (spec, b, _) = modelwin_policies();
        let grid = [0.0, 0.25, 0.5, 1.0, 2.0];
        let medians: Vec<f64> = grid
            .iter()
            .map(|&sigma| {
                let mut v: Vec<f64> =
                    (0..20).map(|seed| asd(&spec, &b, sigma, 5, 50, seed).unwrap()).collect();
                v.sort_by(f64::total_cmp);
                0.5 * (v[9] + v[10])
            })
            .collect();
        for w in medians.windows(2) {
            assert!(w[1] >= w[0], "{medians:?}");
        }
    }

    #[test]
    fn beta_worked_example() {
        let (spec, b, e) = modelwin_policies();
        let oracle = exact_posterior(&spec, &b).unwrap();
        let beta = beta_table(&oracle, &e, &b).unwrap();
        let phi = oracle.posterior(0, 0, 1).unwrap();
        let expect = phi[0] * 4.0 + phi[1] * 7.0;
        let got = beta.get(0, 0, 1).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 5.703).abs() < 1e-3);
        assert!(beta.get(0, 0, 0).is_none());
    }

    #[test]
    fn beta_unit_for_identical_policies() {
        let (spec, b, _) = modelwin_policies();
        let noisy = inject_logit_noise(&exact_posterior(&spec, &b).unwrap(), 1.0, 4).unwrap();
        let beta = beta_table(&noisy, &b, &b).unwrap();
        for ((s, a, sn), _) in noisy.entries() {
            assert!((beta.get(s, a, sn).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_overlap_violation() {
        let spec = build_modelwin();
        let mut oracle = PosteriorOracle::empty(3, 2, 2);
        oracle.set(0, 1, 1, &[0.5, 0.5]).unwrap();
        let never_a1 = PolicyTable::from_fn(3, 2, 2, |_, _, a| if a == 0 { 1.0 } else { 0.0 }).unwrap();
        let e = PolicySpec::new(EnvKind::ModelWin, 0.1).tabulate(&spec).unwrap();
        assert_eq!(
            beta_table(&oracle, &e, &never_a1),
            Err(ConfoundingError::Overlap { s: 0, a: 1, u: 0 })
        );
    }

    #[test]
    fn imputation_point_mass_and_determinism() {
        let mut oracle = PosteriorOracle::empty(3, 2, 2);
        oracle.set(0, 0, 1, &[0.0, 1.0]).unwrap();
        oracle.set(1, 0, 0, &[0.0, 1.0]).unwrap();
        let t1 = Transition { s: 0, a: 0, r: 0.0, s_next: 1 };
        let t2 = Transition { s: 1, a: 0, r: 14.0, s_next: 0 };
        let data = Dataset::new(vec![t1, t2, t1, t2], vec![0, 4], None).unwrap();
        assert_eq!(impute_confounders(&oracle, &data, 9).unwrap(), vec![1, 1, 1, 1]);

        let (spec, b, _) = modelwin_policies();
        let exact = exact_posterior(&spec, &b).unwrap();
        let data = sample_trajectories(&spec, &b, 50, 100, 2).unwrap();
        let x = impute_confounders(&exact, &data, 5).unwrap();
        assert_eq!(x, impute_confounders(&exact, &data, 5).unwrap());
    }

    #[test]
    fn imputation_frequency_matches_posterior() {
        let (spec, b, _) = modelwin_policies();
        let exact = exact_posterior(&spec, &b).unwrap();
        let t = Transition { s: 0, a: 0, r: 0.0, s_next: 1 };
        let n = 20_000;
        let data = Dataset::new(vec![t; n], vec![0, n], None).unwrap();
        let u = impute_confounders(&exact, &data, 77).unwrap();
        let f0 = u.iter().filter(|&&x| x == 0).count() as f64 / n as f64;
        let p0 = exact.posterior(0, 0, 1).unwrap()[0];
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!((f0 - p0).abs() < 3.0 * se);
    }

    #[test]
    fn imputation_unreachable_errors() {
        let oracle = PosteriorOracle::empty(3, 2, 2);
        let t = Transition { s: 0, a: 0, r: 0.0, s_next: 1 };
        let data = Dataset::new(vec![t], vec![0, 1], None).unwrap();
        assert!(matches!(
            impute_confounders(&oracle, &data, 1),
            Err(ConfoundingError::Unreachable { .. })
        ));
    }
}
