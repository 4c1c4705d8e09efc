#![no_main]

use libfuzzer_sys::fuzz_target;
use mdpuc_ope::io::read_oracle;

fuzz_target!(|data: &[u8]| {
    // ModelWin and GridWorld dimensions
    let _ = read_oracle(data, 3, 2, 2);
    let _ = read_oracle(data, 25, 4, 2);
});
