//! Every checked-in fuzz seed must be accepted by its parser, so the fuzzers
//! start from the interesting side of each format.

use std::path::Path;

use pvdeconv::autodiff::checkpoint::Checkpoint;
use pvdeconv::geometry::{decode_pvpc, decode_transform, parse_obj, parse_ply, parse_stl};
use pvdeconv::model::ModelConfig;
use pvdeconv::trainer::{parse_eval_csv, parse_log, Manifest, TrainConfig};

fn check(target: &str, accept: impl Fn(&[u8]) -> bool) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let bytes = std::fs::read(&path).unwrap();
        assert!(accept(&bytes), "{} rejected", path.display());
        seen += 1;
    }
    assert!(seen > 0, "no seeds for {target}");
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn seeds_parse() {
    check("checkpoint", |b| Checkpoint::decode(b).is_ok());
    check("pvpc", |b| decode_pvpc(b).is_ok());
    check("obj", |b| parse_obj(b).is_ok());
    check("ply", |b| parse_ply(b).is_ok());
    check("stl", |b| parse_stl(b).is_ok());
    check("manifest", |b| Manifest::parse(text(b), ".").is_ok());
    check("model_config", |b| ModelConfig::parse(text(b), ModelConfig::toy()).is_ok());
    check("train_config", |b| TrainConfig::parse(text(b), TrainConfig::default()).is_ok());
    check("eval_csv", |b| parse_eval_csv(text(b), "chamfer_raw").map(|r| r.len() == 3).unwrap_or(false));
    check("train_log", |b| parse_log(text(b)).map(|r| r.len() == 2).unwrap_or(false));
    check("norm_transform", |b| decode_transform(text(b)).is_ok());
}
