//! Summary statistics over benchmark repetitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (denominator `n - 1`); `None` below two values.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// `mean ± 1.96·sd/√n`, or `None` when the standard deviation is undefined.
pub fn normal_ci(values: &[f64]) -> Option<(f64, f64)> {
    let sd = sample_sd(values)?;
    let m = mean(values);
    let half = Z_95 * sd / (values.len() as f64).sqrt();
    Some((m - half, m + half))
}

pub fn rmse(estimates: &[f64], truth: f64) -> f64 {
    (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64).sqrt()
}

/// Percentile bootstrap interval for the RMSE of `estimates` around `truth`.
pub fn bootstrap_rmse_ci(estimates: &[f64], truth: f64, n_boot: usize, seed: u64) -> (f64, f64) {
    let n = estimates.len();
    if n == 0 || n_boot == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|_| {
            let ss: f64 = (0..n).map(|_| (estimates[rng.random_range(0..n)] - truth).powi(2)).sum();
            (ss / n as f64).sqrt()
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let pick = |q: f64| stats[((q * (n_boot - 1) as f64).round() as usize).min(n_boot - 1)];
    (pick(0.025), pick(0.975))
}

/// Median of a nonempty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
