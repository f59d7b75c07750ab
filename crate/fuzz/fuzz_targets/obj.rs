#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::geometry::{encode_obj, parse_obj};

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = parse_obj(data) {
        let again = parse_obj(encode_obj(&mesh).as_bytes()).expect("re-encoded mesh parses");
        assert_eq!(again.faces(), mesh.faces());
    }
});
