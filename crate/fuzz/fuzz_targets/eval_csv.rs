#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::trainer::parse_eval_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_eval_csv(text, "chamfer_raw");
});
