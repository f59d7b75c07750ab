#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::trainer::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::parse(text, ".") {
        let again = Manifest::parse(&m.to_text(), ".").expect("re-encoded manifest parses");
        assert_eq!(again, m);
    }
});
