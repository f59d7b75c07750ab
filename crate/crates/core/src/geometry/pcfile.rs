use std::fmt::Write;
use std::path::Path;

use super::normalize::NormalizationTransform;
use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::fsio;
use crate::pointvoxel::PointCloud;

pub const PVPC_MAGIC: &[u8; 4] = b"PVPC";
pub const PVPC_VERSION: u32 = 1;

/// Rows are `x y z` followed by any feature channels, stored as f32.
pub fn encode_pvpc(cloud: &PointCloud) -> Vec<u8> {
    let extra = cloud.features().map_or(0, |f| f.shape()[1]);
    let c = 3 + extra;
    let mut out = Vec::with_capacity(16 + cloud.len() * c * 4);
    out.extend_from_slice(PVPC_MAGIC);
    out.extend_from_slice(&PVPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    for (i, p) in cloud.coords().iter().enumerate() {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        if let Some(f) = cloud.features() {
            for v in f.row(i) {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_pvpc(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 16 {
        return Err(Error::parse_offset(bytes.len(), "truncated PVPC header"));
    }
    if &bytes[..4] != PVPC_MAGIC {
        return Err(Error::parse_offset(0, "bad magic, expected PVPC"));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != PVPC_VERSION {
        return Err(Error::parse_offset(4, format!("unsupported version {version}")));
    }
    let n = word(8) as usize;
    let c = word(12) as usize;
    if c < 3 {
        return Err(Error::parse_offset(12, format!("need at least 3 channels, got {c}")));
    }
    let expected = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(16));
    if expected != Some(bytes.len()) {
        return Err(Error::parse_offset(
            16,
            format!("payload size mismatch for {n} points × {c} channels ({} bytes present)", bytes.len()),
        ));
    }
    let vals: Vec<f32> = bytes[16..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let coords = vals.chunks_exact(c).map(|r| [r[0] as f64, r[1] as f64, r[2] as f64]).collect();
    let cloud = PointCloud::new(coords).map_err(|e| Error::parse_offset(16, e.to_string()))?;
    if c == 3 {
        return Ok(cloud);
    }
    let feats: Vec<Scalar> = vals
        .chunks_exact(c)
        .flat_map(|r| r[3..].iter().map(|&v| v as Scalar))
        .collect();
    cloud.with_features(Tensor::new(vec![n, c - 3], feats)?)
}

pub fn write_pvpc(path: &Path, cloud: &PointCloud) -> Result<()> {
    fsio::write_atomic(path, &encode_pvpc(cloud))
}

pub fn read_pvpc(path: &Path) -> Result<PointCloud> {
    decode_pvpc(&fsio::read(path)?).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

/// One `x y z` line per point.
pub fn encode_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.coords() {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}

/// Path of the normalization sidecar written next to a cloud file.
pub fn norm_sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".norm");
    s.into()
}

pub fn encode_transform(t: &NormalizationTransform) -> String {
    serde_json::json!({ "translation": t.translation, "scale": t.scale }).to_string()
}

pub fn decode_transform(text: &str) -> Result<NormalizationTransform> {
    let bad = |m: &str| Error::parse_line(1, m.to_string());
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse_line(e.line(), e.to_string()))?;
    let tr = v["translation"].as_array().ok_or_else(|| bad("missing translation array"))?;
    if tr.len() != 3 {
        return Err(bad("translation must have three entries"));
    }
    let mut translation = [0.0; 3];
    for (slot, x) in translation.iter_mut().zip(tr) {
        *slot = x.as_f64().ok_or_else(|| bad("translation entries must be numbers"))?;
    }
    let scale = v["scale"].as_f64().ok_or_else(|| bad("missing scale"))?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(bad("scale must be positive"));
    }
    Ok(NormalizationTransform { translation, scale })
}
