#![no_main]

use libfuzzer_sys::fuzz_target;
use mdpuc_ope::io::{read_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = read_dataset(data) {
        let mut buf = Vec::new();
        let hidden = ds.hidden_confounders().is_some();
        write_dataset(&mut buf, &ds, hidden).expect("parsed datasets serialize");
        assert_eq!(read_dataset(buf.as_slice()).expect("round trip"), ds);
    }
});
