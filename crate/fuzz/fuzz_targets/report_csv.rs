#![no_main]

use libfuzzer_sys::fuzz_target;
use mdpuc_ope::harness::{parse_report_csv, write_report_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_report_csv(data) {
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &rows).expect("write to memory");
        let again = parse_report_csv(buf.as_slice()).expect("round trip");
        assert_eq!(again.len(), rows.len());
    }
});
