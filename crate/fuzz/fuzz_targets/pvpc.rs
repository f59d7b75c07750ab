#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::geometry::{decode_pvpc, encode_pvpc};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = decode_pvpc(data) {
        let again = decode_pvpc(&encode_pvpc(&cloud)).expect("re-encoded cloud decodes");
        assert_eq!(again.len(), cloud.len());
    }
});
