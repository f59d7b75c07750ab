//! Mesh ingestion, surface sampling, normalization and point-cloud files.

mod mesh;
mod normalize;
mod obj;
mod pcfile;
mod ply;
pub mod primitives;
mod sample;
mod stl;

use std::path::Path;

pub use mesh::TriangleMesh;
pub use normalize::{normalize_cloud, normalize_mesh, normalize_points, NormalizationTransform};
pub use obj::{encode_obj, parse_obj};
pub use pcfile::{
    decode_pvpc, decode_transform, encode_pvpc, encode_transform, encode_xyz, norm_sidecar, read_pvpc,
    write_pvpc, PVPC_MAGIC, PVPC_VERSION,
};
pub use ply::{encode_ply_ascii, encode_ply_binary, parse_ply};
pub use sample::sample_uniform;
pub use stl::{encode_stl, parse_stl};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
    Stl,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<MeshFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "ply" => Ok(MeshFormat::Ply),
            "stl" => Ok(MeshFormat::Stl),
            _ => Err(Error::Config(format!(
                "cannot infer mesh format of {} (expected .obj, .ply or .stl)",
                path.display()
            ))),
        }
    }
}

pub fn parse_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh> {
    match format {
        MeshFormat::Obj => parse_obj(bytes),
        MeshFormat::Ply => parse_ply(bytes),
        MeshFormat::Stl => parse_stl(bytes),
    }
}

/// Read and parse a mesh file; errors name the file.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let bytes = crate::fsio::read(path)?;
    parse_mesh(&bytes, format).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}
