use mdpuc_ope::env::{build_modelwin, sample_trajectories, EnvKind, PolicySpec};
use mdpuc_ope::harness::{parse_report_csv, BenchmarkConfig};
use mdpuc_ope::io::{read_dataset, read_density, read_oracle, read_runs, write_dataset};
use proptest::prelude::*;

fn csv_like() -> impl Strategy<Value = String> {
    let field = prop_oneof![
        "-?[0-9]{1,3}",
        "-?[0-9]\\.[0-9]{1,4}",
        Just(String::new()),
        Just("NaN".to_string()),
        Just("inf".to_string()),
        "[a-z_]{1,8}",
    ];
    let line = prop::collection::vec(field, 0..9).prop_map(|f| f.join(","));
    (
        prop_oneof![
            Just("traj,step,s,a,r,s_next".to_string()),
            Just("traj,step,s,a,r,s_next,u".to_string()),
            Just("s,a,s_next,u,prob".to_string()),
            Just("s,d_hat".to_string()),
            Just("method,n_traj,seed,estimate".to_string()),
            Just("method,n_traj,alpha,asd,mean_estimate,ci_low,ci_high,rmse,log_rmse".to_string()),
            "[a-z,]{0,20}",
        ],
        prop::collection::vec(line, 0..12),
    )
        .prop_map(|(h, lines)| format!("{h}\n{}", lines.join("\n")))
}

proptest! {
    #[test]
    fn parsers_never_panic_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = read_dataset(bytes.as_slice());
        let _ = read_oracle(bytes.as_slice(), 3, 2, 2);
        let _ = read_density(bytes.as_slice());
        let _ = read_runs(bytes.as_slice());
        let _ = parse_report_csv(bytes.as_slice());
        if let Ok(text) = std::str::from_utf8(&bytes) {
            let _ = BenchmarkConfig::from_toml_str(text);
        }
    }

    #[test]
    fn parsers_never_panic_on_csv_shaped_text(text in csv_like()) {
        let _ = read_dataset(text.as_bytes());
        let _ = read_oracle(text.as_bytes(), 3, 2, 2);
        let _ = read_density(text.as_bytes());
        let _ = read_runs(text.as_bytes());
        let _ = parse_report_csv(text.as_bytes());
    }

    #[test]
    fn config_parser_never_panics_on_key_values(
        pairs in prop::collection::vec(
            (
                prop_oneof![
                    Just("repetitions"), Just("alpha"), Just("noise_sigma"), Just("pi_b"),
                    Just("n_traj_grid"), Just("lambda_h"), Just("kernel_ws"), Just("gmm_iterations"),
                ],
                prop_oneof![
                    "-?[0-9]{1,4}", "-?[0-9]\\.[0-9]{1,3}", Just("[]".to_string()),
                    Just("[0, 10]".to_string()), Just("nan".to_string()), Just("\"x\"".to_string()),
                ],
            ),
            0..6,
        )
    ) {
        let mut seen = std::collections::BTreeSet::new();
        let text: String = pairs
            .into_iter()
            .filter(|(k, _)| seen.insert(*k))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        if let Ok(cfg) = BenchmarkConfig::from_toml_str(&text) {
            prop_assert!(cfg.repetitions >= 1);
            prop_assert!(!cfg.n_traj_grid.is_empty());
        }
    }

    #[test]
    fn simulated_datasets_round_trip(seed in any::<u64>(), n in 1usize..5, h in 1usize..20) {
        let spec = build_modelwin();
        let pol = PolicySpec::new(EnvKind::ModelWin, 0.7).tabulate(&spec).unwrap();
        let data = sample_trajectories(&spec, &pol, n, h, seed).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, true).unwrap();
        prop_assert_eq!(read_dataset(buf.as_slice()).unwrap(), data);
    }
}
