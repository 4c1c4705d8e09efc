#![no_main]

use libfuzzer_sys::fuzz_target;
use mdpuc_ope::harness::BenchmarkConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = BenchmarkConfig::from_toml_str(text) {
            let _ = cfg.horizon();
            let _ = cfg.pipeline();
        }
    }
});
