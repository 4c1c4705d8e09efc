//! Policy-value estimators: the balanced weighted estimator and the direct,
//! doubly-robust and IPS baselines, plus a pipeline that shares the posterior,
//! density ratio and weights across methods.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balancing::{balance, BalanceKernel, BalancingError, WeightVector, DEFAULT_BALANCE_LAMBDA};
use crate::confounding::{beta_table, impute_confounders, ConfoundingError, PosteriorOracle};
use crate::density_ratio::{
    estimate_density_ratio, estimate_from_summary, DensityRatio, DensityRatioError, GmmHyperparams,
    TransitionSummary,
};
use crate::env::{sample_index, Dataset, PolicyTable};
use crate::seed::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("outcome model has no observations for (s={s}, u={u}, a={a})")]
    AbsentCell { s: usize, u: usize, a: usize },
    #[error("behavior policy gives zero probability to action {a} in state {s} at level {u}")]
    Overlap { s: usize, u: usize, a: usize },
    #[error("{0} estimate is not finite")]
    NonFinite(Method),
    #[error(transparent)]
    Confounding(#[from] ConfoundingError),
    #[error(transparent)]
    DensityRatio(#[from] DensityRatioError),
    #[error(transparent)]
    Balancing(#[from] BalancingError),
}

type Result<T> = std::result::Result<T, EstimatorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Balanced,
    DirectMethod,
    DoublyRobust,
    Ips,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Balanced, Method::DirectMethod, Method::DoublyRobust, Method::Ips];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Balanced => "balanced",
            Method::DirectMethod => "direct_method",
            Method::DoublyRobust => "doubly_robust",
            Method::Ips => "ips",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "balanced" => Ok(Method::Balanced),
            "direct_method" | "dm" => Ok(Method::DirectMethod),
            "doubly_robust" | "dr" => Ok(Method::DoublyRobust),
            "ips" => Ok(Method::Ips),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `‖W‖₂` for methods that use balancing weights.
    pub weight_norm: Option<f64>,
    /// States where the density ratio came out negative.
    pub negative_ratio_states: Vec<usize>,
    /// Outcome-model cells queried without observations.
    pub absent_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

impl Estimate {
    fn checked(value: f64, method: Method, diagnostics: Diagnostics) -> Result<Self> {
        if !value.is_finite() {
            return Err(EstimatorError::NonFinite(method));
        }
        Ok(Self { value, method, diagnostics })
    }
}

/// `τ̂ = (1/n) Σ W_i R_i`
pub fn weighted_value(w: &WeightVector, data: &Dataset) -> Result<Estimate> {
    if w.len() != data.len() {
        return Err(EstimatorError::Dimension(format!("{} weights for {} samples", w.len(), data.len())));
    }
    if data.is_empty() {
        return Err(EstimatorError::Dimension("empty dataset".into()));
    }
    let total: f64 = w.w().iter().zip(data.transitions()).map(|(w, t)| w * t.r).sum();
    let diagnostics = Diagnostics { weight_norm: Some(w.norm()), ..Default::default() };
    Estimate::checked(total / data.len() as f64, Method::Balanced, diagnostics)
}

/// Group-mean reward per `(s, u, a)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    n_states: usize,
    n_levels: usize,
    n_actions: usize,
    sums: Vec<f64>,
    counts: Vec<usize>,
    global_mean: f64,
}

impl OutcomeModel {
    fn idx(&self, s: usize, u: usize, a: usize) -> usize {
        (s * self.n_levels + u) * self.n_actions + a
    }

    /// Mean reward of a cell, or `None` when it has no observations.
    pub fn mu(&self, s: usize, u: usize, a: usize) -> Option<f64> {
        let i = self.idx(s, u, a);
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }

    pub fn count(&self, s: usize, u: usize, a: usize) -> usize {
        self.counts[self.idx(s, u, a)]
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// The all-zero model, with every cell marked present.
    pub fn zeros(n_states: usize, n_levels: usize, n_actions: usize) -> Self {
        let m = n_states * n_levels * n_actions;
        Self { n_states, n_levels, n_actions, sums: vec![0.0; m], counts: vec![1; m], global_mean: 0.0 }
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
}

/// How to treat outcome-model cells with no observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentCellPolicy {
    /// Substitute the global mean reward and count the event.
    #[default]
    GlobalMean,
    /// Fail with [`EstimatorError::AbsentCell`].
    Strict,
}

struct CellLookup<'a> {
    model: &'a OutcomeModel,
    policy: AbsentCellPolicy,
    absent: usize,
}

impl CellLookup<'_> {
    fn get(&mut self, s: usize, u: usize, a: usize) -> Result<f64> {
        match (self.model.mu(s, u, a), self.policy) {
            (Some(v), _) => Ok(v),
            (None, AbsentCellPolicy::GlobalMean) => {
                self.absent += 1;
                Ok(self.model.global_mean)
            }
            (None, AbsentCellPolicy::Strict) => Err(EstimatorError::AbsentCell { s, u, a }),
        }
    }
}

/// Regresses `R` on `(S, Û, A)` by cell means, using imputed levels `u_hat`.
pub fn fit_outcome_model(
    data: &Dataset,
    u_hat: &[usize],
    n_states: usize,
    n_levels: usize,
    n_actions: usize,
) -> Result<OutcomeModel> {
    if u_hat.len() != data.len() {
        return Err(EstimatorError::Dimension(format!("{} imputed levels for {} samples", u_hat.len(), data.len())));
    }
    let m = n_states * n_levels * n_actions;
    let mut model = OutcomeModel { n_states, n_levels, n_actions, sums: vec![0.0; m], counts: vec![0; m], global_mean: 0.0 };
    for (t, &u) in data.transitions().iter().zip(u_hat) {
        if t.s >= n_states || u >= n_levels || t.a >= n_actions {
            return Err(EstimatorError::Dimension(format!("cell (s={}, u={u}, a={}) out of range", t.s, t.a)));
        }
        let i = model.idx(t.s, u, t.a);
        model.sums[i] += t.r;
        model.counts[i] += 1;
    }
    model.global_mean = if data.is_empty() { 0.0 } else { data.mean_reward() };
    Ok(model)
}

fn check_tables(oracle: &PosteriorOracle, d_hat: &DensityRatio, mu: &OutcomeModel, eval: &PolicyTable) -> Result<()> {
    let ok = d_hat.len() == oracle.n_states()
        && (mu.n_states, mu.n_levels, mu.n_actions) == (oracle.n_states(), oracle.n_levels(), oracle.n_actions())
        && (eval.n_states(), eval.n_levels(), eval.n_actions())
            == (oracle.n_states(), oracle.n_levels(), oracle.n_actions());
    if !ok {
        return Err(EstimatorError::Dimension("oracle, density ratio, outcome model and policy disagree".into()));
    }
    Ok(())
}

/// `τ̂_DM = (1/n) Σ_i d̂(S_i) Σ_{u,a} φ(u|Z_i) π_e(a|S_i,u) μ̂_a(S_i,u)`
pub fn direct_method(
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    mu: &OutcomeModel,
    data: &Dataset,
    eval: &PolicyTable,
    absent: AbsentCellPolicy,
) -> Result<Estimate> {
    check_tables(oracle, d_hat, mu, eval)?;
    if data.is_empty() {
        return Err(EstimatorError::Dimension("empty dataset".into()));
    }
    let mut cells = CellLookup { model: mu, policy: absent, absent: 0 };
    let mut total = 0.0;
    for t in data.transitions() {
        let phi = oracle.posterior(t.s, t.a, t.s_next)?;
        let mut inner = 0.0;
        for (u, &pu) in phi.iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            for a in 0..eval.n_actions() {
                let pe = eval.prob(t.s, u, a);
                if pe == 0.0 {
                    continue;
                }
                inner += pu * pe * cells.get(t.s, u, a)?;
            }
        }
        total += d_hat.get(t.s) * inner;
    }
    let diagnostics = Diagnostics {
        negative_ratio_states: d_hat.negative_states(),
        absent_cells: cells.absent,
        ..Default::default()
    };
    Estimate::checked(total / data.len() as f64, Method::DirectMethod, diagnostics)
}

/// `τ̂_DR = τ̂_DM + (1/n) Σ_i W_i (R_i − Σ_u φ(u|Z_i) μ̂_{A_i}(S_i,u))`
pub fn doubly_robust(
    w: &WeightVector,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    mu: &OutcomeModel,
    data: &Dataset,
    eval: &PolicyTable,
    absent: AbsentCellPolicy,
) -> Result<Estimate> {
    if w.len() != data.len() {
        return Err(EstimatorError::Dimension(format!("{} weights for {} samples", w.len(), data.len())));
    }
    let dm = direct_method(oracle, d_hat, mu, data, eval, absent)?;
    let mut cells = CellLookup { model: mu, policy: absent, absent: 0 };
    let mut correction = 0.0;
    for (t, &wi) in data.transitions().iter().zip(w.w()) {
        let phi = oracle.posterior(t.s, t.a, t.s_next)?;
        let mut fitted = 0.0;
        for (u, &pu) in phi.iter().enumerate() {
            if pu != 0.0 {
                fitted += pu * cells.get(t.s, u, t.a)?;
            }
        }
        correction += wi * (t.r - fitted);
    }
    let mut diagnostics = dm.diagnostics;
    diagnostics.absent_cells += cells.absent;
    diagnostics.weight_norm = Some(w.norm());
    Estimate::checked(dm.value + correction / data.len() as f64, Method::DoublyRobust, diagnostics)
}

/// IPS baseline on the augmented state `x = (s, û)`.
///
/// Levels are imputed from the oracle, then `x` is treated as the state of an
/// ordinary MDP: the density ratio is estimated with
/// `β(x, a, x') = π_e(a|x) / π_b(a|x)` and the estimate is
/// `(1/n) Σ d̂(X_i) β(X_i, A_i) R_i`. The successor of a trajectory's last
/// transition gets a level drawn from the empirical distribution of imputed
/// levels.
pub fn ips_estimate(
    data: &Dataset,
    oracle: &PosteriorOracle,
    eval: &PolicyTable,
    behavior: &PolicyTable,
    hp: &GmmHyperparams,
    seed: u64,
) -> Result<Estimate> {
    if data.is_empty() {
        return Err(EstimatorError::Dimension("empty dataset".into()));
    }
    let (n_s, n_u, n_a) = (oracle.n_states(), oracle.n_levels(), oracle.n_actions());
    for table in [eval, behavior] {
        if (table.n_states(), table.n_levels(), table.n_actions()) != (n_s, n_u, n_a) {
            return Err(EstimatorError::Dimension("policy table does not match the oracle".into()));
        }
    }
    let u_hat = impute_confounders(oracle, data, derive_seed("ips-impute", &[seed]))?;
    let mut level_freq = vec![0.0; n_u];
    for &u in &u_hat {
        level_freq[u] += 1.0 / u_hat.len() as f64;
    }
    let mut tail_rng = ChaCha8Rng::seed_from_u64(derive_seed("ips-tail", &[seed]));

    let ts = data.transitions();
    let mut ratios = Vec::with_capacity(ts.len());
    let mut records = Vec::with_capacity(ts.len());
    for w in data.trajectory_offsets().windows(2) {
        for i in w[0]..w[1] {
            let t = &ts[i];
            let u = u_hat[i];
            let pb = behavior.prob(t.s, u, t.a);
            if pb <= 0.0 {
                return Err(EstimatorError::Overlap { s: t.s, u, a: t.a });
            }
            let ratio = eval.prob(t.s, u, t.a) / pb;
            let u_next = if i + 1 < w[1] { u_hat[i + 1] } else { sample_index(&level_freq, &mut tail_rng) };
            records.push((t.a, t.s * n_u + u, t.s_next * n_u + u_next, 1.0, ratio));
            ratios.push(ratio);
        }
    }
    let summary = TransitionSummary::from_weighted(n_s * n_u, n_a, records)?;
    let d_aug = estimate_from_summary(&summary, hp)?;
    let total: f64 = ts
        .iter()
        .zip(&u_hat)
        .zip(&ratios)
        .map(|((t, &u), r)| d_aug.get(t.s * n_u + u) * r * t.r)
        .sum();
    let diagnostics = Diagnostics { negative_ratio_states: d_aug.negative_states(), ..Default::default() };
    Estimate::checked(total / ts.len() as f64, Method::Ips, diagnostics)
}

/// Settings shared by every method in one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub gmm: GmmHyperparams,
    pub balance_lambda: f64,
    pub kernel: BalanceKernel,
    pub absent_cells: AbsentCellPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gmm: GmmHyperparams::default(),
            balance_lambda: DEFAULT_BALANCE_LAMBDA,
            kernel: BalanceKernel::default(),
            absent_cells: AbsentCellPolicy::default(),
        }
    }
}

/// Intermediate products of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    pub d_hat: Option<DensityRatio>,
    pub weights: Option<WeightVector>,
}

/// Runs the requested methods on one dataset. The density ratio and weights
/// are computed once and shared; a failure in a shared stage is reported for
/// every method that depends on it.
pub fn run_methods(
    data: &Dataset,
    oracle: &PosteriorOracle,
    behavior: &PolicyTable,
    eval: &PolicyTable,
    cfg: &PipelineConfig,
    methods: &[Method],
    seed: u64,
) -> (Vec<(Method, Result<Estimate>)>, PipelineArtifacts) {
    let needs_ratio = methods.iter().any(|m| *m != Method::Ips);
    let needs_weights = methods.iter().any(|m| matches!(m, Method::Balanced | Method::DoublyRobust));
    let needs_outcome = methods.iter().any(|m| matches!(m, Method::DirectMethod | Method::DoublyRobust));

    let d_hat: Option<Result<DensityRatio>> = needs_ratio.then(|| {
        let beta = beta_table(oracle, eval, behavior)?;
        Ok(estimate_density_ratio(data, &beta, &cfg.gmm)?)
    });
    let weights: Option<Result<WeightVector>> = match (&d_hat, needs_weights) {
        (Some(Ok(d)), true) => Some(
            balance(data, oracle, d, eval, &cfg.kernel, cfg.balance_lambda)
                .map(|(_, _, w)| w)
                .map_err(EstimatorError::from),
        ),
        (Some(Err(e)), true) => Some(Err(e.clone())),
        _ => None,
    };
    let outcome: Option<Result<OutcomeModel>> = needs_outcome.then(|| {
        let u_hat = impute_confounders(oracle, data, derive_seed("outcome-impute", &[seed]))?;
        fit_outcome_model(data, &u_hat, oracle.n_states(), oracle.n_levels(), oracle.n_actions())
    });

    let results = methods
        .iter()
        .map(|&m| {
            let r = (|| match m {
                Method::Balanced => {
                    let w = weights.clone().expect("weights computed")?;
                    let d = d_hat.clone().expect("ratio computed")?;
                    let mut e = weighted_value(&w, data)?;
                    e.diagnostics.negative_ratio_states = d.negative_states();
                    Ok(e)
                }
                Method::DirectMethod => {
                    let d = d_hat.clone().expect("ratio computed")?;
                    let mu = outcome.clone().expect("outcome computed")?;
                    direct_method(oracle, &d, &mu, data, eval, cfg.absent_cells)
                }
                Method::DoublyRobust => {
                    let d = d_hat.clone().expect("ratio computed")?;
                    let w = weights.clone().expect("weights computed")?;
                    let mu = outcome.clone().expect("outcome computed")?;
                    doubly_robust(&w, oracle, &d, &mu, data, eval, cfg.absent_cells)
                }
                Method::Ips => ips_estimate(data, oracle, eval, behavior, &cfg.gmm, seed),
            })();
            (m, r)
        })
        .collect();
    let artifacts = PipelineArtifacts {
        d_hat: d_hat.and_then(|r| r.ok()),
        weights: weights.and_then(|r| r.ok()),
    };
    (results, artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Transition;

    fn data(rows: &[(usize, usize, f64, usize)]) -> Dataset {
        let ts: Vec<_> = rows.iter().map(|&(s, a, r, s_next)| Transition { s, a, r, s_next }).collect();
        let n = ts.len();
        Dataset::new(ts, vec![0, n], None).unwrap()
    }

    #[test]
    fn weighted_value_examples() {
        let d = data(&[(0, 0, 2.0, 1), (1, 0, 4.0, 0)]);
        let ones = WeightVector::from_samples(vec![1.0, 1.0], 1e-3);
        assert_eq!(weighted_value(&ones, &d).unwrap().value, 3.0);
        let zeros = WeightVector::from_samples(vec![0.0, 0.0], 1e-3);
        assert_eq!(weighted_value(&zeros, &d).unwrap().value, 0.0);
        let w = WeightVector::from_samples(vec![0.3, 1.7], 1e-3);
        let w2 = WeightVector::from_samples(vec![0.6, 3.4], 1e-3);
        let (a, b) = (weighted_value(&w, &d).unwrap().value, weighted_value(&w2, &d).unwrap().value);
        assert!((2.0 * a - b).abs() < 1e-15);
        let short = WeightVector::from_samples(vec![1.0], 1e-3);
        assert!(matches!(weighted_value(&short, &d), Err(EstimatorError::Dimension(_))));
    }

    #[test]
    fn outcome_cell_means() {
        let d = data(&[(0, 1, 7.0, 1)]);
        let m = fit_outcome_model(&d, &[0], 3, 2, 2).unwrap();
        assert_eq!(m.mu(0, 0, 1), Some(7.0));
        assert_eq!(m.mu(0, 1, 1), None);
        let d = data(&[(0, 1, 2.0, 1), (0, 1, 4.0, 2)]);
        let m = fit_outcome_model(&d, &[1, 1], 3, 2, 2).unwrap();
        assert_eq!(m.mu(0, 1, 1), Some(3.0));
        assert_eq!(m.count(0, 1, 1), 2);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("black_box".parse::<Method>().is_err());
    }

    #[test]
    fn direct_method_hand_sum() {
        // two samples, φ = (0.5, 0.5), π_e(a0) = 0.25 at both levels
        let mut o = PosteriorOracle::empty(2, 2, 2);
        o.set(0, 0, 1, &[0.5, 0.5]).unwrap();
        o.set(1, 1, 0, &[0.5, 0.5]).unwrap();
        let eval = PolicyTable::from_fn(2, 2, 2, |_, _, a| if a == 0 { 0.25 } else { 0.75 }).unwrap();
        let d = data(&[(0, 0, 0.0, 1), (1, 1, 0.0, 0)]);
        let mut mu = OutcomeModel::zeros(2, 2, 2);
        let vals = [((0, 0, 0), 1.0), ((0, 0, 1), 2.0), ((0, 1, 0), 3.0), ((0, 1, 1), 4.0), ((1, 0, 0), 5.0), ((1, 0, 1), 6.0), ((1, 1, 0), 7.0), ((1, 1, 1), 8.0)];
        for ((s, u, a), v) in vals {
            let i = mu.idx(s, u, a);
            mu.sums[i] = v;
        }
        let ratio = DensityRatio::constant(2, 1.0);
        let est = direct_method(&o, &ratio, &mu, &d, &eval, AbsentCellPolicy::Strict).unwrap();
        let s0 = 0.5 * (0.25 * 1.0 + 0.75 * 2.0) + 0.5 * (0.25 * 3.0 + 0.75 * 4.0);
        let s1 = 0.5 * (0.25 * 5.0 + 0.75 * 6.0) + 0.5 * (0.25 * 7.0 + 0.75 * 8.0);
        assert!((est.value - (s0 + s1) / 2.0).abs() < 1e-14);
        let scaled = direct_method(&o, &ratio.scaled(3.0), &mu, &d, &eval, AbsentCellPolicy::Strict).unwrap();
        assert!((scaled.value - 3.0 * est.value).abs() < 1e-13);
    }

    #[test]
    fn absent_cells() {
        let mut o = PosteriorOracle::empty(2, 2, 2);
        o.set(0, 0, 1, &[1.0, 0.0]).unwrap();
        let eval = PolicyTable::from_fn(2, 2, 2, |_, _, a| if a == 0 { 1.0 } else { 0.0 }).unwrap();
        let d = data(&[(0, 0, 5.0, 1)]);
        let mu = fit_outcome_model(&d, &[1], 2, 2, 2).unwrap();
        let ratio = DensityRatio::constant(2, 1.0);
        let strict = direct_method(&o, &ratio, &mu, &d, &eval, AbsentCellPolicy::Strict);
        assert_eq!(strict, Err(EstimatorError::AbsentCell { s: 0, u: 0, a: 0 }));
        let lenient = direct_method(&o, &ratio, &mu, &d, &eval, AbsentCellPolicy::GlobalMean).unwrap();
        assert_eq!(lenient.value, 5.0);
        assert_eq!(lenient.diagnostics.absent_cells, 1);
    }

    #[test]
    fn doubly_robust_reductions() {
        let mut o = PosteriorOracle::empty(2, 2, 2);
        o.set(0, 0, 1, &[0.3, 0.7]).unwrap();
        o.set(1, 1, 0, &[0.6, 0.4]).unwrap();
        let eval = PolicyTable::from_fn(2, 2, 2, |_, u, a| if a == 0 { 0.2 + 0.1 * u as f64 } else { 0.8 - 0.1 * u as f64 }).unwrap();
        let d = data(&[(0, 0, 2.0, 1), (1, 1, -1.0, 0), (0, 0, 2.5, 1)]);
        let ratio = DensityRatio::constant(2, 1.2);
        let w = WeightVector::from_samples(vec![0.5, 1.5, 0.9], 1e-3);
        let zero_mu = OutcomeModel::zeros(2, 2, 2);
        let dr = doubly_robust(&w, &o, &ratio, &zero_mu, &d, &eval, AbsentCellPolicy::Strict).unwrap();
        assert!((dr.value - weighted_value(&w, &d).unwrap().value).abs() < 1e-15);

        let mu = fit_outcome_model(&d, &[0, 1, 1], 2, 2, 2).unwrap();
        let zero_w = WeightVector::from_samples(vec![0.0; 3], 1e-3);
        let dr0 = doubly_robust(&zero_w, &o, &ratio, &mu, &d, &eval, AbsentCellPolicy::GlobalMean).unwrap();
        let dm = direct_method(&o, &ratio, &mu, &d, &eval, AbsentCellPolicy::GlobalMean).unwrap();
        assert_eq!(dr0.value, dm.value);
    }
}
