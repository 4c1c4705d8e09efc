//! Stationary state density ratio `d(s)` between evaluation and behavior
//! policies, estimated by an iterated kernel minimax GMM.
//!
//! `d` is characterized by `E[d(S)] = 1` together with the conditional
//! moments `E[d(S) β(Z) − d(S') | S'] = 0`. Each iteration fixes the previous
//! iterate `d̃` in the quadratic penalty, solves the inner supremum over the
//! test function `h` and the two normalization multipliers in closed form, and
//! then minimizes the resulting quadratic in `d`'s kernel coefficients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confounding::BetaTable;
use crate::env::{stationary_distribution, Dataset, EnvError, MdpucSpec, PolicyTable};
use crate::linalg::{inverse_symmetric, solve_symmetric, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityRatioError {
    #[error("no transitions to estimate from")]
    Empty,
    #[error("no β entry for observed triple (s={s}, a={a}, s'={s_next})")]
    MissingBeta { s: usize, a: usize, s_next: usize },
    #[error("triple (a={a}, x={x}, y={y}) given with conflicting β values")]
    ConflictingBeta { a: usize, x: usize, y: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

type Result<T> = std::result::Result<T, DensityRatioError>;

/// Kernel on state indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StateKernel {
    /// `k(x, y) = 1{x = y}`
    #[default]
    Identity,
    /// `k(x, y) = exp(-|x - y| / length_scale)` on state ids.
    Laplacian { length_scale: f64 },
}

impl StateKernel {
    pub fn eval(&self, x: usize, y: usize) -> f64 {
        match *self {
            StateKernel::Identity => f64::from(u8::from(x == y)),
            StateKernel::Laplacian { length_scale } => {
                (-(x.abs_diff(y) as f64) / length_scale).exp()
            }
        }
    }

    pub fn gram(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| self.eval(i, j))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmHyperparams {
    pub lambda_h: f64,
    pub lambda_d: f64,
    pub lambda_c: f64,
    pub n_iterations: usize,
    pub kernel_h: StateKernel,
    pub kernel_d: StateKernel,
    /// Clip negative ratios at zero and rescale to unit mean.
    pub clip_negative: bool,
}

impl Default for GmmHyperparams {
    fn default() -> Self {
        Self {
            lambda_h: 1e-8,
            lambda_d: 1e-8,
            lambda_c: 1e-8,
            n_iterations: 5,
            kernel_h: StateKernel::Identity,
            kernel_d: StateKernel::Identity,
            clip_negative: false,
        }
    }
}

impl GmmHyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_h", self.lambda_h),
            ("lambda_d", self.lambda_d),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(DensityRatioError::Hyperparams(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.n_iterations == 0 {
            return Err(DensityRatioError::Hyperparams("n_iterations must be >= 1".into()));
        }
        for k in [self.kernel_h, self.kernel_d] {
            if let StateKernel::Laplacian { length_scale } = k {
                if !(length_scale > 0.0) {
                    return Err(DensityRatioError::Hyperparams(format!(
                        "kernel length scale must be > 0, got {length_scale}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weighted count and `β` of one observed `(a, x, y)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleCount {
    pub a: usize,
    pub x: usize,
    pub y: usize,
    pub count: f64,
    pub beta: f64,
}

/// Sufficient statistics of a dataset for the density-ratio solve.
///
/// Counts are real-valued so exact population weights can stand in for
/// sample counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSummary {
    n_states: usize,
    n_actions: usize,
    triples: Vec<TripleCount>,
    n_x: Vec<f64>,
    np_x: Vec<f64>,
    n: f64,
}

impl TransitionSummary {
    /// Aggregates `(a, x, y, weight, β)` records; repeated triples add their
    /// weights and must agree on `β`.
    pub fn from_weighted(
        n_states: usize,
        n_actions: usize,
        records: impl IntoIterator<Item = (usize, usize, usize, f64, f64)>,
    ) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize, usize), (f64, f64)> = BTreeMap::new();
        for (a, x, y, w, beta) in records {
            if a >= n_actions || x >= n_states || y >= n_states {
                return Err(DensityRatioError::Dimension(format!(
                    "triple (a={a}, x={x}, y={y}) outside {n_actions} actions x {n_states} states"
                )));
            }
            if w == 0.0 {
                continue;
            }
            let entry = map.entry((a, x, y)).or_insert((0.0, beta));
            if entry.1 != beta {
                return Err(DensityRatioError::ConflictingBeta { a, x, y });
            }
            entry.0 += w;
        }
        if map.is_empty() {
            return Err(DensityRatioError::Empty);
        }
        let mut n_x = vec![0.0; n_states];
        let mut np_x = vec![0.0; n_states];
        let mut n = 0.0;
        let triples: Vec<TripleCount> = map
            .into_iter()
            .map(|((a, x, y), (count, beta))| {
                n_x[x] += count;
                np_x[y] += count;
                n += count;
                TripleCount { a, x, y, count, beta }
            })
            .collect();
        Ok(Self { n_states, n_actions, triples, n_x, np_x, n })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn triples(&self) -> &[TripleCount] {
        &self.triples
    }

    /// Number (or mass) of transitions leaving each state.
    pub fn n_x(&self) -> &[f64] {
        &self.n_x
    }

    /// Number (or mass) of transitions entering each state.
    pub fn np_x(&self) -> &[f64] {
        &self.np_x
    }

    pub fn total(&self) -> f64 {
        self.n
    }

    pub fn count(&self, a: usize, x: usize, y: usize) -> f64 {
        self.triples
            .iter()
            .find(|t| (t.a, t.x, t.y) == (a, x, y))
            .map_or(0.0, |t| t.count)
    }

    /// States that appear neither as a source nor as a successor.
    pub fn unobserved_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.n_x[s] == 0.0 && self.np_x[s] == 0.0).collect()
    }
}

/// Counts every `(a, s, s')` of `data` and attaches its `β`.
pub fn summarize(data: &Dataset, beta: &BetaTable) -> Result<TransitionSummary> {
    if data.is_empty() {
        return Err(DensityRatioError::Empty);
    }
    let records = data
        .transitions()
        .iter()
        .map(|t| {
            beta.get(t.s, t.a, t.s_next)
                .map(|b| (t.a, t.s, t.s_next, 1.0, b))
                .ok_or(DensityRatioError::MissingBeta { s: t.s, a: t.a, s_next: t.s_next })
        })
        .collect::<Result<Vec<_>>>()?;
    TransitionSummary::from_weighted(beta.n_states(), beta.n_actions(), records)
}

/// Summary with counts replaced by the behavior policy's exact stationary
/// probabilities of each triple (total mass 1).
pub fn population_summary(
    spec: &MdpucSpec,
    behavior: &PolicyTable,
    beta: &BetaTable,
) -> Result<TransitionSummary> {
    let z = stationary_distribution(spec, behavior)?.z_distribution(spec);
    let (n_s, n_a) = (spec.n_states(), spec.n_actions());
    let mut records = Vec::new();
    for x in 0..n_s {
        for a in 0..n_a {
            for y in 0..n_s {
                let w = z[(x * n_a + a) * n_s + y];
                if w > 0.0 {
                    let b = beta
                        .get(x, a, y)
                        .ok_or(DensityRatioError::MissingBeta { s: x, a, s_next: y })?;
                    records.push((a, x, y, w, b));
                }
            }
        }
    }
    TransitionSummary::from_weighted(n_s, n_a, records)
}

/// Estimated ratio, stored both evaluated per state and as kernel
/// coefficients (`d(s) = Σ_x γ_x K_d(x, s)`).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatio {
    d: Vec<f64>,
    gamma: Vec<f64>,
}

impl DensityRatio {
    /// Evaluates the kernel expansion of `gamma`.
    pub fn from_coefficients(gamma: Vec<f64>, kernel: &StateKernel) -> Self {
        let m = gamma.len();
        let d = (0..m).map(|s| (0..m).map(|x| gamma[x] * kernel.eval(x, s)).sum()).collect();
        Self { d, gamma }
    }

    /// Constant ratio (identity kernel coefficients).
    pub fn constant(n_states: usize, value: f64) -> Self {
        Self { d: vec![value; n_states], gamma: vec![value; n_states] }
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn get(&self, s: usize) -> f64 {
        self.d[s]
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn negative_states(&self) -> Vec<usize> {
        (0..self.d.len()).filter(|&s| self.d[s] < 0.0).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self.d.iter().map(|v| v * c).collect(),
            gamma: self.gamma.iter().map(|v| v * c).collect(),
        }
    }

    /// Clips negative values at zero and rescales so the empirical mean over
    /// source states is one. Coefficients are dropped (set to the clipped
    /// values), so only the evaluated vector is meaningful afterwards.
    pub fn clipped(&self, summary: &TransitionSummary) -> Self {
        let mut d: Vec<f64> = self.d.iter().map(|v| v.max(0.0)).collect();
        let mean: f64 =
            d.iter().zip(summary.n_x()).map(|(v, c)| v * c).sum::<f64>() / summary.total();
        if mean > 0.0 {
            d.iter_mut().for_each(|v| *v /= mean);
        }
        Self { gamma: d.clone(), d }
    }
}

fn check_len(what: &str, v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(DensityRatioError::Dimension(format!("{what} has length {}, expected {m}", v.len())));
    }
    Ok(())
}

/// Regularized inner-problem matrices `(Q + D, q)`, each of size `m + 2`.
///
/// `q` holds the conditional moments of `d` against each kernel section of
/// `h` followed by the two normalization moments `E[d(S)] − 1` and
/// `E[d(S')] − 1`. `Q` is the quadratic penalty built from `d̃`, and
/// `D = BlockDiagonal(λ_h K_h, λ_c, λ_c)`.
pub fn inner_assemble(
    summary: &TransitionSummary,
    d: &[f64],
    d_tilde: &[f64],
    hp: &GmmHyperparams,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = summary.n_states;
    check_len("d", d, m)?;
    check_len("d_tilde", d_tilde, m)?;
    let n = summary.n;
    let kh = hp.kernel_h.gram(m);

    let mut q = DVector::zeros(m + 2);
    let mut g = vec![0.0; m];
    let mut phi1 = vec![0.0; m];
    let mut phi2 = vec![0.0; m];
    let mut big_q = DMatrix::zeros(m + 2, m + 2);
    for t in &summary.triples {
        let (x, y, c, beta) = (t.x, t.y, t.count, t.beta);
        let resid = beta * d[x] - d[y];
        for xp in 0..m {
            q[xp] += c * resid * kh[(xp, y)];
        }
        q[m] += c * (d[x] - 1.0);
        q[m + 1] += c * (d[y] - 1.0);

        let resid_t = beta * d_tilde[x] - d_tilde[y];
        let src = d_tilde[x] - 1.0;
        let dst = d_tilde[y] - 1.0;
        g[y] += c * resid_t * resid_t;
        phi1[y] += c * resid_t * src;
        phi2[y] += c * resid_t * dst;
        big_q[(m, m)] += c * src * src;
        big_q[(m, m + 1)] += c * src * dst;
        big_q[(m + 1, m + 1)] += c * dst * dst;
    }
    for xp in 0..m {
        for xq in 0..m {
            big_q[(xp, xq)] = (0..m).map(|z| g[z] * kh[(xp, z)] * kh[(xq, z)]).sum();
        }
        big_q[(xp, m)] = (0..m).map(|z| phi1[z] * kh[(xp, z)]).sum();
        big_q[(xp, m + 1)] = (0..m).map(|z| phi2[z] * kh[(xp, z)]).sum();
    }
    q /= n;
    big_q /= n;
    for i in 0..m + 2 {
        for j in 0..i {
            big_q[(i, j)] = big_q[(j, i)];
        }
    }
    for i in 0..m {
        for j in 0..m {
            big_q[(i, j)] += hp.lambda_h * kh[(i, j)];
        }
    }
    big_q[(m, m)] += hp.lambda_c;
    big_q[(m + 1, m + 1)] += hp.lambda_c;
    Ok((big_q, q))
}

/// Linear map `d ↦ q(d)` written as `q = A d + a0`.
fn moment_map(summary: &TransitionSummary, kernel_h: &StateKernel) -> (DMatrix<f64>, DVector<f64>) {
    let m = summary.n_states;
    let n = summary.n;
    let kh = kernel_h.gram(m);
    let mut a = DMatrix::zeros(m + 2, m);
    // ψ(x', y) = Σ_{a,z} n(a,y,z) β(a,y,z) K(x', z) − n'(y) K(x', y)
    for t in &summary.triples {
        for xp in 0..m {
            a[(xp, t.x)] += t.count * t.beta * kh[(xp, t.y)];
        }
    }
    for y in 0..m {
        for xp in 0..m {
            a[(xp, y)] -= summary.np_x[y] * kh[(xp, y)];
        }
        a[(m, y)] = summary.n_x[y];
        a[(m + 1, y)] = summary.np_x[y];
    }
    a /= n;
    let mut a0 = DVector::zeros(m + 2);
    a0[m] = -1.0;
    a0[m + 1] = -1.0;
    (a, a0)
}

/// Value of the inner supremum `q(d)ᵀ (Q + D)⁻¹ q(d)` with `Q` built at `d̃`.
pub fn inner_sup_value(
    summary: &TransitionSummary,
    d: &[f64],
    d_tilde: &[f64],
    hp: &GmmHyperparams,
) -> Result<f64> {
    let (qm, q) = inner_assemble(summary, d, d_tilde, hp)?;
    let inv = inverse_symmetric(&qm)?;
    Ok(q.dot(&(&inv * &q)))
}

/// One minimax iteration: closes the inner problem at `d̃` and returns the
/// minimizing ratio.
pub fn outer_solve(
    summary: &TransitionSummary,
    d_tilde: &[f64],
    hp: &GmmHyperparams,
) -> Result<DensityRatio> {
    hp.validate()?;
    let m = summary.n_states;
    let (qm, _) = inner_assemble(summary, d_tilde, d_tilde, hp)?;
    let inv = inverse_symmetric(&qm)?;
    let (a, a0) = moment_map(summary, &hp.kernel_h);
    // sup = dᵀ B d + bᵀ d + const with B = Aᵀ M A, b = 2 Aᵀ M a0
    let ma = &inv * &a;
    let b_mat = a.transpose() * &ma;
    let b_vec = (a.transpose() * (&inv * &a0)) * 2.0;
    let kd = hp.kernel_d.gram(m);
    let mut lhs = &kd * &b_mat * &kd + &kd * hp.lambda_d;
    lhs = (&lhs + lhs.transpose()) * 0.5;
    let rhs = (&kd * &b_vec) * -0.5;
    let gamma = solve_symmetric(&lhs, &rhs)?;
    Ok(DensityRatio::from_coefficients(gamma.iter().copied().collect(), &hp.kernel_d))
}

/// All iterates `d̂⁽¹⁾, …, d̂⁽ᵏ⁾` starting from `d̃ ≡ 1`.
pub fn estimate_iterates(summary: &TransitionSummary, hp: &GmmHyperparams) -> Result<Vec<DensityRatio>> {
    hp.validate()?;
    let mut d_tilde = vec![1.0; summary.n_states];
    let mut out = Vec::with_capacity(hp.n_iterations);
    for _ in 0..hp.n_iterations {
        let next = outer_solve(summary, &d_tilde, hp)?;
        d_tilde = next.values().to_vec();
        out.push(next);
    }
    Ok(out)
}

/// Runs `hp.n_iterations` minimax iterations from `d̃ ≡ 1` on a summary.
pub fn estimate_from_summary(summary: &TransitionSummary, hp: &GmmHyperparams) -> Result<DensityRatio> {
    let last = estimate_iterates(summary, hp)?.pop().expect("n_iterations >= 1");
    Ok(if hp.clip_negative { last.clipped(summary) } else { last })
}

/// Estimates the stationary density ratio from logged data.
pub fn estimate_density_ratio(
    data: &Dataset,
    beta: &BetaTable,
    hp: &GmmHyperparams,
) -> Result<DensityRatio> {
    let summary = summarize(data, beta)?;
    estimate_from_summary(&summary, hp)
}

/// Empirical violations of the identifying moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentResiduals {
    /// `(1/n) Σ d(S_i) − 1`
    pub mean_residual: f64,
    /// `(1/n'(s')) Σ_{i: S'_i = s'} (d(S_i) β(Z_i) − d(s'))`, absent for
    /// states never observed as successors.
    pub conditional: Vec<Option<f64>>,
}

pub fn moment_residuals(d: &[f64], summary: &TransitionSummary) -> Result<MomentResiduals> {
    let m = summary.n_states;
    check_len("d", d, m)?;
    let mut sums = vec![0.0; m];
    let mut mean = 0.0;
    for t in &summary.triples {
        sums[t.y] += t.count * (d[t.x] * t.beta - d[t.y]);
        mean += t.count * d[t.x];
    }
    let conditional = (0..m)
        .map(|y| (summary.np_x[y] > 0.0).then(|| sums[y] / summary.np_x[y]))
        .collect();
    Ok(MomentResiduals { mean_residual: mean / summary.n - 1.0, conditional })
}
