#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::geometry::parse_stl;

fuzz_target!(|data: &[u8]| {
    let _ = parse_stl(data);
});
