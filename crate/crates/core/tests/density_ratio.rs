use mdpuc_ope::confounding::{beta_table, exact_posterior, BetaTable};
use mdpuc_ope::density_ratio::{
    estimate_density_ratio, estimate_from_summary, estimate_iterates, inner_sup_value, moment_residuals, outer_solve,
    population_summary, summarize, DensityRatio, GmmHyperparams,
};
use mdpuc_ope::env::{
    build_gridworld, build_modelwin, sample_trajectories, stationary_distribution, MdpucSpec, PolicySpec, PolicyTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    spec: MdpucSpec,
    behavior: PolicyTable,
    eval: PolicyTable,
    beta: BetaTable,
}

fn setup(spec: MdpucSpec, pi_b: f64, pi_e: f64) -> Setup {
    let kind = spec.kind();
    let behavior = PolicySpec::new(kind, pi_b).tabulate(&spec).unwrap();
    let eval = PolicySpec::new(kind, pi_e).tabulate(&spec).unwrap();
    let oracle = exact_posterior(&spec, &behavior).unwrap();
    let beta = beta_table(&oracle, &eval, &behavior).unwrap();
    Setup { spec, behavior, eval, beta }
}

/// Brute-force ratio of the two stationary state marginals.
fn true_ratio(s: &Setup) -> Vec<f64> {
    let db = stationary_distribution(&s.spec, &s.behavior).unwrap();
    let de = stationary_distribution(&s.spec, &s.eval).unwrap();
    de.state_marginal()
        .iter()
        .zip(db.state_marginal())
        .map(|(e, b)| if *b > 0.0 { e / b } else { 0.0 })
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn population_residuals_vanish_at_true_ratio() {
    let s = setup(build_modelwin(), 0.7, 0.1);
    let summary = population_summary(&s.spec, &s.behavior, &s.beta).unwrap();
    let r = moment_residuals(&true_ratio(&s), &summary).unwrap();
    assert!(r.mean_residual.abs() <= 1e-8, "mean residual {}", r.mean_residual);
    for c in r.conditional.iter().flatten() {
        assert!(c.abs() <= 1e-8, "conditional residual {c}");
    }
}

// GridWorld successor masses go down to 1e-15, so per-state residuals are
// checked after multiplying back by the successor mass.
#[test]
fn gridworld_population_residuals_vanish_in_mass() {
    let s = setup(build_gridworld(), 0.7, 0.1);
    let summary = population_summary(&s.spec, &s.behavior, &s.beta).unwrap();
    let r = moment_residuals(&true_ratio(&s), &summary).unwrap();
    assert!(r.mean_residual.abs() <= 1e-8, "mean residual {}", r.mean_residual);
    for (c, np) in r.conditional.iter().zip(summary.np_x()) {
        if let Some(c) = c {
            assert!((c * np).abs() <= 1e-8, "conditional residual mass {}", c * np);
        }
    }
}

#[test]
fn population_recovery() {
    let s = setup(build_modelwin(), 0.7, 0.1);
    let summary = population_summary(&s.spec, &s.behavior, &s.beta).unwrap();
    let d = estimate_from_summary(&summary, &GmmHyperparams::default()).unwrap();
    let err = sup_diff(d.values(), &true_ratio(&s));
    assert!(err <= 1e-4, "sup error {err}");
}

#[test]
fn modelwin_sample_recovery_and_stabilization() {
    let s = setup(build_modelwin(), 0.7, 0.1);
    let data = sample_trajectories(&s.spec, &s.behavior, 200, 100, 2024).unwrap();
    let summary = summarize(&data, &s.beta).unwrap();
    let iterates = estimate_iterates(&summary, &GmmHyperparams::default()).unwrap();
    assert_eq!(iterates.len(), 5);
    let err = sup_diff(iterates[4].values(), &true_ratio(&s));
    assert!(err <= 0.1, "sup error {err}");
    let step = sup_diff(iterates[4].values(), iterates[3].values());
    assert!(step <= 0.01, "last step {step}");
}

#[test]
fn identical_policies_give_unit_ratio() {
    let s = setup(build_modelwin(), 0.7, 0.7);
    let data = sample_trajectories(&s.spec, &s.behavior, 200, 100, 7).unwrap();
    let summary = summarize(&data, &s.beta).unwrap();
    let one = outer_solve(&summary, &[1.0; 3], &GmmHyperparams::default()).unwrap();
    assert!(sup_diff(one.values(), &[1.0; 3]) <= 0.05);
    let last = estimate_density_ratio(&data, &s.beta, &GmmHyperparams::default()).unwrap();
    assert!(sup_diff(last.values(), &[1.0; 3]) <= 0.05);
}

#[test]
fn outer_solve_minimizes_inner_maximum() {
    let hp = GmmHyperparams::default();
    for (s, seed) in [(setup(build_modelwin(), 0.7, 0.1), 3u64), (setup(build_gridworld(), 0.7, 0.1), 4)] {
        let data = sample_trajectories(&s.spec, &s.behavior, 20, 50, seed).unwrap();
        let summary = summarize(&data, &s.beta).unwrap();
        let m = summary.n_states();
        let d_tilde = vec![1.0; m];
        let best = outer_solve(&summary, &d_tilde, &hp).unwrap();
        let objective = |d: &DensityRatio| {
            inner_sup_value(&summary, d.values(), &d_tilde, &hp).unwrap()
                + hp.lambda_d * d.gamma().iter().zip(d.values()).map(|(g, v)| g * v).sum::<f64>()
        };
        let base = objective(&best);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let gamma: Vec<f64> =
                best.gamma().iter().map(|g| g + rng.random_range(-0.5..0.5)).collect();
            let alt = DensityRatio::from_coefficients(gamma, &hp.kernel_d);
            assert!(base <= objective(&alt) + 1e-10, "{base} > {}", objective(&alt));
        }
    }
}

#[test]
fn unobserved_states_get_zero_under_identity_kernel() {
    let s = setup(build_gridworld(), 0.7, 0.1);
    let data = sample_trajectories(&s.spec, &s.behavior, 2, 20, 11).unwrap();
    let summary = summarize(&data, &s.beta).unwrap();
    let d = estimate_density_ratio(&data, &s.beta, &GmmHyperparams::default()).unwrap();
    let unseen = summary.unobserved_states();
    assert!(!unseen.is_empty());
    for x in unseen {
        assert_eq!(d.get(x), 0.0);
    }
    assert!(d.values().iter().all(|v| v.is_finite()));
}

#[test]
fn missing_beta_is_reported() {
    let s = setup(build_modelwin(), 0.7, 0.1);
    let other = setup(build_gridworld(), 0.7, 0.1);
    let data = sample_trajectories(&other.spec, &other.behavior, 1, 5, 1).unwrap();
    assert!(summarize(&data, &s.beta).is_err());
}

