#![no_main]

use libfuzzer_sys::fuzz_target;
use pvdeconv::autodiff::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        let again = Checkpoint::decode(&ck.encode()).expect("re-encoded checkpoint decodes");
        let shape = |c: &Checkpoint| c.entries.iter().map(|e| (e.name.clone(), e.tensor.shape().to_vec())).collect::<Vec<_>>();
        assert_eq!(shape(&again), shape(&ck));
    }
});
