#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::geometry::{encode_ply_binary, parse_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_ply(data) {
        let again = parse_ply(&encode_ply_binary(&mesh)).expect("re-encoded mesh parses");
        assert_eq!(again.faces(), mesh.faces());
    }
});
