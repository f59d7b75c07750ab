//! Binary container for named tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   "PVDC"
//! version u32            (currently 1)
//! count   u32
//! count × {
//!     name_len u32, name UTF-8 bytes
//!     dtype    u8        (0 = f32, 1 = f64)
//!     rank     u32, dims u32 × rank
//!     payload  product(dims) little-endian scalars
//! }
//! ```

use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVDC";
pub const VERSION: u32 = 1;
const MAX_RANK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    /// The dtype matching this build's [`Scalar`].
    pub fn native() -> Self {
        if std::mem::size_of::<Scalar>() == 4 {
            DType::F32
        } else {
            DType::F64
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dtype: DType,
    pub tensor: Tensor,
}

/// Ordered collection of named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push(Entry {
            name: name.into(),
            dtype: DType::native(),
            tensor,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.tensor)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.dtype as u8);
            out.extend_from_slice(&(e.tensor.rank() as u32).to_le_bytes());
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in e.tensor.data() {
                match e.dtype {
                    DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    DType::F64 => out.extend_from_slice(&(v as f64).to_le_bytes()),
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::parse_offset(0, "bad magic, expected \"PVDC\""));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::parse_offset(4, format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::new();
        for _ in 0..count {
            let at = r.pos;
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::parse_offset(at + 4, "tensor name is not UTF-8"))?
                .to_string();
            let tag_at = r.pos;
            let dtype = DType::from_tag(r.u8()?)
                .ok_or_else(|| Error::parse_offset(tag_at, "unknown dtype tag"))?;
            let rank = r.u32()? as usize;
            if rank > MAX_RANK {
                return Err(Error::parse_offset(tag_at + 1, format!("rank {rank} exceeds {MAX_RANK}")));
            }
            let mut shape = Vec::with_capacity(rank);
            let mut numel: usize = 1;
            for _ in 0..rank {
                let d = r.u32()? as usize;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| Error::parse_offset(r.pos, "tensor size overflows"))?;
                shape.push(d);
            }
            let payload_len = numel
                .checked_mul(dtype.width())
                .ok_or_else(|| Error::parse_offset(r.pos, "tensor size overflows"))?;
            let payload = r.take(payload_len)?;
            let data: Vec<Scalar> = match dtype {
                DType::F32 => payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as Scalar)
                    .collect(),
                DType::F64 => payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as Scalar)
                    .collect(),
            };
            entries.push(Entry {
                name,
                dtype,
                tensor: Tensor::from_parts(shape, data),
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::parse_offset(r.pos, "trailing bytes after last tensor"));
        }
        Ok(Checkpoint { entries })
    }

    /// Write atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsio::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&crate::fsio::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse_offset(self.pos, format!("truncated: needed {n} more bytes")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
