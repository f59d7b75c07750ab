#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::model::ModelConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = ModelConfig::parse(text, ModelConfig::toy()) {
        assert_eq!(ModelConfig::parse(&c.to_text(), ModelConfig::paper()).expect("round trip"), c);
    }
});
