//! Optimal balancing weights.
//!
//! For an RKHS ball of test functions `g_a(s, u)` the worst-case objective
//! `sup_g Ĵ_λ(W, g)` is the quadratic `(WᵀGW − 2gᵀW + C) / n²`, minimized by
//! `W = G⁻¹g`. Samples sharing the observed triple `z = (s, a, s')` share a
//! row of `G` and an entry of `g`, so the system is solved over the `C` unique
//! triples and expanded back.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confounding::{ConfoundingError, PosteriorOracle};
use crate::density_ratio::DensityRatio;
use crate::env::{Dataset, PolicyTable};
use crate::linalg::{solve_symmetric, LinalgError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalancingError {
    #[error("invalid kernel weights (w_s={w_s}, w_u={w_u}, w_su={w_su})")]
    InvalidKernel { w_s: f64, w_u: f64, w_su: f64 },
    #[error("balancing lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Confounding(#[from] ConfoundingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, BalancingError>;

pub const DEFAULT_BALANCE_LAMBDA: f64 = 1e-3;

/// Samples grouped by their observed triple.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedData {
    unique_z: Vec<(usize, usize, usize)>,
    counts: Vec<usize>,
    index_map: Vec<usize>,
}

impl CompressedData {
    /// Unique `(s, a, s')` triples in ascending order.
    pub fn unique_z(&self) -> &[(usize, usize, usize)] {
        &self.unique_z
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Group index of each sample.
    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn n_groups(&self) -> usize {
        self.unique_z.len()
    }

    pub fn n_samples(&self) -> usize {
        self.index_map.len()
    }

    /// Sums a per-sample vector within each group.
    pub fn group_sums(&self, per_sample: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.unique_z.len()];
        for (&c, v) in self.index_map.iter().zip(per_sample) {
            out[c] += v;
        }
        out
    }
}

pub fn compress(data: &Dataset) -> CompressedData {
    let mut groups: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    for t in data.transitions() {
        groups.insert(t.z(), 0);
    }
    let unique_z: Vec<_> = groups.keys().copied().collect();
    for (i, v) in groups.values_mut().enumerate() {
        *v = i;
    }
    let mut counts = vec![0; unique_z.len()];
    let index_map = data
        .transitions()
        .iter()
        .map(|t| {
            let c = groups[&t.z()];
            counts[c] += 1;
            c
        })
        .collect();
    CompressedData { unique_z, counts, index_map }
}

/// `k((s,u),(s',u')) = w_s·1{s=s'} + w_u·1{u=u'} + w_su·1{s=s'}·1{u=u'}`
///
/// The default is the additive kernel (`w_su = 0`); a positive `w_su` adds
/// the joint indicator so state-confounder interactions lie in the RKHS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceKernel {
    pub w_s: f64,
    pub w_u: f64,
    #[serde(default)]
    pub w_su: f64,
}

impl Default for BalanceKernel {
    fn default() -> Self {
        Self { w_s: 0.5, w_u: 0.5, w_su: 0.0 }
    }
}

impl BalanceKernel {
    pub fn new(w_s: f64, w_u: f64) -> Result<Self> {
        Self::with_interaction(w_s, w_u, 0.0)
    }

    pub fn with_interaction(w_s: f64, w_u: f64, w_su: f64) -> Result<Self> {
        let k = Self { w_s, w_u, w_su };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_s, self.w_u, self.w_su];
        let ok = ws.iter().all(|w| *w >= 0.0 && w.is_finite()) && ws.iter().sum::<f64>() > 0.0;
        if !ok {
            return Err(BalancingError::InvalidKernel { w_s: self.w_s, w_u: self.w_u, w_su: self.w_su });
        }
        Ok(())
    }

    pub fn eval(&self, s: usize, u: usize, s2: usize, u2: usize) -> f64 {
        let mut k = 0.0;
        if s == s2 {
            k += self.w_s;
        }
        if u == u2 {
            k += self.w_u;
        }
        if s == s2 && u == u2 {
            k += self.w_su;
        }
        k
    }
}

/// `E[k((s_i,U),(s_j,Ũ)) | z_i, z_j]` with `U ~ φ(·|z_i)` and an independent
/// shadow `Ũ ~ φ(·|z_j)`.
pub fn posterior_kernel_expectation(
    oracle: &PosteriorOracle,
    kernel: &BalanceKernel,
    z_i: (usize, usize, usize),
    z_j: (usize, usize, usize),
) -> Result<f64> {
    let pi = oracle.posterior(z_i.0, z_i.1, z_i.2)?;
    let pj = oracle.posterior(z_j.0, z_j.1, z_j.2)?;
    Ok(expectation(kernel, z_i.0, pi, z_j.0, pj, |_, _| 1.0))
}

/// `Σ_{u,u'} φ_i(u) φ_j(u') h(u, u') k((s_i,u),(s_j,u'))`
fn expectation(
    kernel: &BalanceKernel,
    s_i: usize,
    phi_i: &[f64],
    s_j: usize,
    phi_j: &[f64],
    h: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut total = 0.0;
    for (u, &pu) in phi_i.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for (v, &pv) in phi_j.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            total += pu * pv * h(u, v) * kernel.eval(s_i, u, s_j, v);
        }
    }
    total
}

/// Compressed form of the worst-case quadratic.
///
/// With `E_{cc'} = δ(a_c, a_{c'}) E[k | z_c, z_{c'}]` and `g_c` the per-sample
/// linear coefficient shared by group `c`, the full objective for any
/// per-sample `W` is
/// `(Σ_{cc'} S_c S_{c'} E_{cc'} + λ‖W‖² − 2 Σ_c g_c S_c + C) / n²`
/// where `S_c` sums `W` over group `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceQuadratic {
    kernel_matrix: DMatrix<f64>,
    g_unit: DVector<f64>,
    counts: Vec<f64>,
    constant: f64,
    lambda: f64,
    n: usize,
}

impl BalanceQuadratic {
    /// `G'_{cc'} = N_c N_{c'} E_{cc'} + N_c λ δ_{cc'}`
    pub fn g_prime(&self) -> DMatrix<f64> {
        let c = self.counts.len();
        let mut g = DMatrix::from_fn(c, c, |i, j| self.counts[i] * self.counts[j] * self.kernel_matrix[(i, j)]);
        for i in 0..c {
            g[(i, i)] += self.counts[i] * self.lambda;
        }
        g
    }

    /// `g'_c = N_c g_c`
    pub fn g_prime_vector(&self) -> DVector<f64> {
        DVector::from_fn(self.counts.len(), |i, _| self.counts[i] * self.g_unit[i])
    }

    pub fn kernel_matrix(&self) -> &DMatrix<f64> {
        &self.kernel_matrix
    }

    /// Linear coefficient of a single sample in group `c`.
    pub fn g_unit(&self) -> &DVector<f64> {
        &self.g_unit
    }

    /// The `W`-free term `C` (not divided by `n²`).
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Builds the compressed quadratic. `d_hat` is evaluated at the source state
/// of each triple.
pub fn build_quadratic(
    compressed: &CompressedData,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
    kernel: &BalanceKernel,
    lambda: f64,
) -> Result<BalanceQuadratic> {
    kernel.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(BalancingError::InvalidLambda(lambda));
    }
    let zs = compressed.unique_z();
    let c = zs.len();
    if c == 0 {
        return Err(BalancingError::Dimension("no samples to balance".into()));
    }
    for &(s, _, s_next) in zs {
        if s >= d_hat.len() || s_next >= d_hat.len() {
            return Err(BalancingError::Dimension(format!(
                "density ratio covers {} states, triple uses state {}",
                d_hat.len(),
                s.max(s_next)
            )));
        }
    }
    if eval.n_levels() != oracle.n_levels() {
        return Err(BalancingError::Dimension(format!(
            "evaluation policy has {} levels, oracle has {}",
            eval.n_levels(),
            oracle.n_levels()
        )));
    }
    let phis = zs
        .iter()
        .map(|&(s, a, sn)| oracle.posterior(s, a, sn))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let counts: Vec<f64> = compressed.counts().iter().map(|&n| n as f64).collect();
    let n_actions = eval.n_actions();

    let mut kernel_matrix = DMatrix::zeros(c, c);
    let mut g_unit = DVector::zeros(c);
    let mut constant = 0.0;
    for i in 0..c {
        let (s_i, a_i, _) = zs[i];
        for j in 0..c {
            let (s_j, a_j, _) = zs[j];
            if a_i == a_j && j >= i {
                let e = expectation(kernel, s_i, phis[i], s_j, phis[j], |_, _| 1.0);
                kernel_matrix[(i, j)] = e;
                kernel_matrix[(j, i)] = e;
            }
            let d_j = d_hat.get(s_j);
            if d_j != 0.0 {
                let cross = expectation(kernel, s_i, phis[i], s_j, phis[j], |_, v| eval.prob(s_j, v, a_i));
                g_unit[i] += counts[j] * d_j * cross;
            }
            let d_i = d_hat.get(s_i);
            if d_i != 0.0 && d_j != 0.0 {
                let both = expectation(kernel, s_i, phis[i], s_j, phis[j], |u, v| {
                    (0..n_actions).map(|a| eval.prob(s_i, u, a) * eval.prob(s_j, v, a)).sum()
                });
                constant += counts[i] * counts[j] * d_i * d_j * both;
            }
        }
    }
    Ok(BalanceQuadratic { kernel_matrix, g_unit, counts, constant, lambda, n: compressed.n_samples() })
}

/// Per-sample balancing weights alongside their compressed form.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    compressed_w: Vec<f64>,
    lambda: f64,
}

impl WeightVector {
    /// Expands group weights to samples through `index_map`.
    pub fn expand(compressed_w: Vec<f64>, compressed: &CompressedData, lambda: f64) -> Result<Self> {
        if compressed_w.len() != compressed.n_groups() {
            return Err(BalancingError::Dimension(format!(
                "{} group weights for {} groups",
                compressed_w.len(),
                compressed.n_groups()
            )));
        }
        let w = compressed.index_map().iter().map(|&c| compressed_w[c]).collect();
        Ok(Self { w, compressed_w, lambda })
    }

    /// Weights given per sample with no group structure.
    pub fn from_samples(w: Vec<f64>, lambda: f64) -> Self {
        Self { compressed_w: w.clone(), w, lambda }
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn compressed_w(&self) -> &[f64] {
        &self.compressed_w
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Solves `G' W' = g'` and expands to samples.
pub fn solve_weights(quad: &BalanceQuadratic, compressed: &CompressedData) -> Result<WeightVector> {
    if quad.counts.len() != compressed.n_groups() {
        return Err(BalancingError::Dimension("quadratic and compression disagree".into()));
    }
    let w = solve_symmetric(&quad.g_prime(), &quad.g_prime_vector())?;
    WeightVector::expand(w.iter().copied().collect(), compressed, quad.lambda)
}

/// `sup_g Ĵ_λ(W, g)` over the unit kernel ball, for any per-sample `W`.
pub fn sup_objective_value(w: &[f64], quad: &BalanceQuadratic, compressed: &CompressedData) -> Result<f64> {
    if w.len() != quad.n || compressed.n_samples() != quad.n {
        return Err(BalancingError::Dimension(format!("{} weights for {} samples", w.len(), quad.n)));
    }
    let sums = DVector::from_vec(compressed.group_sums(w));
    let quadratic = sums.dot(&(&quad.kernel_matrix * &sums));
    let ridge = quad.lambda * w.iter().map(|x| x * x).sum::<f64>();
    let linear = 2.0 * quad.g_unit.dot(&sums);
    let n2 = (quad.n as f64).powi(2);
    Ok((quadratic + ridge - linear + quad.constant) / n2)
}

/// Function `g_a(s, u) = Σ_{(s',u')} c_a(s',u') k((s',u'),(s,u))` in the
/// kernel's RKHS, one component per action.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBallFunction {
    kernel: BalanceKernel,
    n_states: usize,
    n_levels: usize,
    /// `coef[a][s * n_levels + u]`
    coef: Vec<Vec<f64>>,
}

impl KernelBallFunction {
    pub fn new(kernel: BalanceKernel, n_states: usize, n_levels: usize, coef: Vec<Vec<f64>>) -> Result<Self> {
        kernel.validate()?;
        if coef.iter().any(|c| c.len() != n_states * n_levels) {
            return Err(BalancingError::Dimension("coefficient table does not match the domain".into()));
        }
        Ok(Self { kernel, n_states, n_levels, coef })
    }

    /// Random expansion with coefficients uniform on [−1, 1], scaled to RKHS
    /// norm `radius`.
    pub fn random(
        kernel: BalanceKernel,
        n_states: usize,
        n_levels: usize,
        n_actions: usize,
        radius: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef = (0..n_actions)
            .map(|_| (0..n_states * n_levels).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Ok(Self::new(kernel, n_states, n_levels, coef)?.with_norm(radius))
    }

    pub fn n_actions(&self) -> usize {
        self.coef.len()
    }

    pub fn eval(&self, a: usize, s: usize, u: usize) -> f64 {
        let mut total = 0.0;
        for (idx, &c) in self.coef[a].iter().enumerate() {
            if c != 0.0 {
                total += c * self.kernel.eval(idx / self.n_levels, idx % self.n_levels, s, u);
            }
        }
        total
    }

    /// `Σ_a c_aᵀ K c_a`
    pub fn norm_squared(&self) -> f64 {
        let m = self.n_states * self.n_levels;
        let mut total = 0.0;
        for c in &self.coef {
            for i in 0..m {
                if c[i] == 0.0 {
                    continue;
                }
                for j in 0..m {
                    if c[j] != 0.0 {
                        total += c[i]
                            * c[j]
                            * self.kernel.eval(i / self.n_levels, i % self.n_levels, j / self.n_levels, j % self.n_levels);
                    }
                }
            }
        }
        total
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().max(0.0).sqrt()
    }

    /// Rescales to the given RKHS norm; the zero function stays zero.
    pub fn with_norm(mut self, radius: f64) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            let f = radius / norm;
            self.coef.iter_mut().flatten().for_each(|c| *c *= f);
        }
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.coef.iter_mut().flatten().for_each(|c| *c *= factor);
        self
    }
}

/// `f_{ia}(u) = W_i δ(A_i, a) − d̂(S_i) π_e(a | S_i, u)`, weighted by
/// `φ(u|Z_i)/n` and accumulated on `(S_i, u)`; this is the kernel-section
/// representation of the bias functional.
fn bias_representer(
    w: &[f64],
    data: &Dataset,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
) -> Result<Vec<Vec<f64>>> {
    if w.len() != data.len() {
        return Err(BalancingError::Dimension(format!("{} weights for {} samples", w.len(), data.len())));
    }
    let (n_states, n_levels, n_actions) = (eval.n_states(), oracle.n_levels(), eval.n_actions());
    let n = data.len() as f64;
    let mut coef = vec![vec![0.0; n_states * n_levels]; n_actions];
    for (t, &wi) in data.transitions().iter().zip(w) {
        let phi = oracle.posterior(t.s, t.a, t.s_next)?;
        let d = d_hat.get(t.s);
        for (u, &pu) in phi.iter().enumerate() {
            for (a, row) in coef.iter_mut().enumerate() {
                let f = if a == t.a { wi } else { 0.0 } - d * eval.prob(t.s, u, a);
                row[t.s * n_levels + u] += pu * f / n;
            }
        }
    }
    Ok(coef)
}

/// `Ĵ_λ(W, g) = B̂(W, g)² + (λ/n²)‖W‖²` with
/// `B̂ = (1/n) Σ_i Σ_a Σ_u φ(u|Z_i) f_{ia}(u) g_a(S_i, u)`.
pub fn eval_j_for_g(
    w: &WeightVector,
    g: &KernelBallFunction,
    data: &Dataset,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
) -> Result<f64> {
    let b = bias_for_g(w.w(), g, data, oracle, d_hat, eval)?;
    let n2 = (data.len() as f64).powi(2);
    Ok(b * b + w.lambda() * w.w().iter().map(|x| x * x).sum::<f64>() / n2)
}

/// The conditional bias term `B̂(W, g)`.
pub fn bias_for_g(
    w: &[f64],
    g: &KernelBallFunction,
    data: &Dataset,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
) -> Result<f64> {
    if w.len() != data.len() {
        return Err(BalancingError::Dimension(format!("{} weights for {} samples", w.len(), data.len())));
    }
    if g.n_actions() != eval.n_actions() {
        return Err(BalancingError::Dimension("test function and policy disagree on actions".into()));
    }
    let mut total = 0.0;
    for (t, &wi) in data.transitions().iter().zip(w) {
        let phi = oracle.posterior(t.s, t.a, t.s_next)?;
        let d = d_hat.get(t.s);
        for (u, &pu) in phi.iter().enumerate() {
            if pu == 0.0 {
                continue;
            }
            for a in 0..eval.n_actions() {
                let f = if a == t.a { wi } else { 0.0 } - d * eval.prob(t.s, u, a);
                total += pu * f * g.eval(a, t.s, u);
            }
        }
    }
    Ok(total / data.len() as f64)
}

/// Unit-norm maximizer of `B̂(W, g)²`, the normalized bias representer.
pub fn worst_case_direction(
    w: &WeightVector,
    data: &Dataset,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
    kernel: &BalanceKernel,
) -> Result<KernelBallFunction> {
    let coef = bias_representer(w.w(), data, oracle, d_hat, eval)?;
    Ok(KernelBallFunction::new(*kernel, eval.n_states(), oracle.n_levels(), coef)?.with_norm(1.0))
}

/// Convenience wrapper: compress, build and solve.
pub fn balance(
    data: &Dataset,
    oracle: &PosteriorOracle,
    d_hat: &DensityRatio,
    eval: &PolicyTable,
    kernel: &BalanceKernel,
    lambda: f64,
) -> Result<(CompressedData, BalanceQuadratic, WeightVector)> {
    let compressed = compress(data);
    let quad = build_quadratic(&compressed, oracle, d_hat, eval, kernel, lambda)?;
    let w = solve_weights(&quad, &compressed)?;
    Ok((compressed, quad, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Transition;

    fn dataset(zs: &[(usize, usize, usize)]) -> Dataset {
        let transitions: Vec<_> = zs.iter().map(|&(s, a, s_next)| Transition { s, a, r: 1.0, s_next }).collect();
        let n = transitions.len();
        Dataset::new(transitions, vec![0, n], None).unwrap()
    }

    fn oracle_with(entries: &[((usize, usize, usize), [f64; 2])]) -> PosteriorOracle {
        let mut o = PosteriorOracle::empty(3, 2, 2);
        for &((s, a, sn), p) in entries {
            o.set(s, a, sn, &p).unwrap();
        }
        o
    }

    #[test]
    fn compression_groups() {
        let c = compress(&dataset(&[(0, 1, 2), (0, 1, 2)]));
        assert_eq!(c.n_groups(), 1);
        assert_eq!(c.counts(), &[2]);
        let c = compress(&dataset(&[(2, 0, 0), (0, 1, 2), (1, 0, 0)]));
        assert_eq!(c.counts(), &[1, 1, 1]);
        assert_eq!(c.unique_z(), &[(0, 1, 2), (1, 0, 0), (2, 0, 0)]);
        assert_eq!(c.index_map(), &[2, 0, 1]);
    }

    #[test]
    fn kernel_expectation_examples() {
        let k = BalanceKernel::default();
        let o = oracle_with(&[((0, 0, 1), [0.5, 0.5]), ((0, 1, 2), [0.5, 0.5]), ((1, 0, 0), [1.0, 0.0]), ((2, 0, 0), [1.0, 0.0])]);
        let same_s = posterior_kernel_expectation(&o, &k, (0, 0, 1), (0, 1, 2)).unwrap();
        assert!((same_s - 0.75).abs() < 1e-15);
        let diff_s = posterior_kernel_expectation(&o, &k, (1, 0, 0), (2, 0, 0)).unwrap();
        assert!((diff_s - 0.5).abs() < 1e-15);
        assert!(posterior_kernel_expectation(&o, &k, (0, 0, 1), (2, 1, 1)).is_err());
    }

    #[test]
    fn single_group_g_prime() {
        let o = oracle_with(&[((0, 0, 1), [0.5, 0.5])]);
        let c = compress(&dataset(&[(0, 0, 1), (0, 0, 1)]));
        let eval = PolicyTable::from_fn(3, 2, 2, |_, _, _| 0.5).unwrap();
        let d = DensityRatio::constant(3, 1.0);
        let q = build_quadratic(&c, &o, &d, &eval, &BalanceKernel::default(), 1e-3).unwrap();
        assert!((q.g_prime()[(0, 0)] - 3.002).abs() < 1e-12);
        let w = solve_weights(&q, &c).unwrap();
        let expect = q.g_prime_vector()[0] / q.g_prime()[(0, 0)];
        assert!((w.compressed_w()[0] - expect).abs() < 1e-12);
        let w0 = w.compressed_w()[0];
        assert_eq!(w.w(), &[w0, w0]);
    }

    #[test]
    fn invalid_settings() {
        assert!(BalanceKernel::new(0.0, 0.0).is_err());
        assert!(BalanceKernel::new(-1.0, 2.0).is_err());
        let o = oracle_with(&[((0, 0, 1), [0.5, 0.5])]);
        let c = compress(&dataset(&[(0, 0, 1)]));
        let eval = PolicyTable::from_fn(3, 2, 2, |_, _, _| 0.5).unwrap();
        let d = DensityRatio::constant(3, 1.0);
        let err = build_quadratic(&c, &o, &d, &eval, &BalanceKernel::default(), 0.0);
        assert_eq!(err, Err(BalancingError::InvalidLambda(0.0)));
    }

    #[test]
    fn zero_weights_give_constant() {
        let o = oracle_with(&[((0, 0, 1), [0.3, 0.7]), ((1, 1, 0), [0.6, 0.4])]);
        let c = compress(&dataset(&[(0, 0, 1), (1, 1, 0), (0, 0, 1)]));
        let eval = PolicyTable::from_fn(3, 2, 2, |_, u, a| if a == 0 { 0.2 + 0.1 * u as f64 } else { 0.8 - 0.1 * u as f64 }).unwrap();
        let d = DensityRatio::constant(3, 1.3);
        let q = build_quadratic(&c, &o, &d, &eval, &BalanceKernel::default(), 1e-3).unwrap();
        let v = sup_objective_value(&[0.0; 3], &q, &c).unwrap();
        assert!((v - q.constant() / 9.0).abs() < 1e-15);
        let w = solve_weights(&q, &c).unwrap();
        let g = q.g_prime_vector();
        let gp = q.g_prime();
        let min = (q.constant() - g.dot(&solve_symmetric(&gp, &g).unwrap())) / 9.0;
        assert!((sup_objective_value(w.w(), &q, &c).unwrap() - min).abs() < 1e-12);
    }

    #[test]
    fn ball_function_norm() {
        let k = BalanceKernel::default();
        let g = KernelBallFunction::random(k, 3, 2, 2, 0.5, 1).unwrap();
        assert!((g.norm() - 0.5).abs() < 1e-12);
        // single kernel section has norm² = k(x,x) = w_s + w_u
        let mut coef = vec![vec![0.0; 6]; 1];
        coef[0][3] = 1.0;
        let f = KernelBallFunction::new(k, 3, 2, coef).unwrap();
        assert!((f.norm_squared() - 1.0).abs() < 1e-15);
        assert_eq!(f.eval(0, 1, 1), 1.0);
        assert_eq!(f.eval(0, 1, 0), 0.5);
        assert_eq!(f.eval(0, 2, 1), 0.5);
    }
}
