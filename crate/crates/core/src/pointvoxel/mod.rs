//! The point ↔ voxel bridge and the PVConv / PVDeConv blocks.

mod block;
mod voxel;

pub use block::{init_block_params, pvconv_block, pvdeconv_block, BlockOutput};
pub use voxel::{cell_of, devoxelize, trilinear_weights, voxelize, VoxelGrid};

use crate::autodiff::{Scalar, Tensor};
use crate::error::{Error, Result};

/// A point in the (normalized) unit cube.
pub type Point = [f64; 3];

/// Ordered point set with optional per-point feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Point>,
    features: Option<Tensor>,
}

impl PointCloud {
    pub fn new(coords: Vec<Point>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Contract("point cloud must contain at least one point".into()));
        }
        if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::Contract(format!("point {i} has a non-finite coordinate")));
        }
        Ok(PointCloud { coords, features: None })
    }

    /// Attach an `n × C` feature matrix.
    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rank() != 2 || features.shape()[0] != self.coords.len() {
            return Err(Error::Dimension {
                op: "point_cloud",
                axis: "feature rows",
                expected: self.coords.len(),
                found: features.shape().first().copied().unwrap_or(0),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<Point> {
        self.coords
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    /// Coordinates as an `n × 3` tensor.
    pub fn coords_tensor(&self) -> Tensor {
        coords_to_tensor(&self.coords)
    }
}

pub fn coords_to_tensor(coords: &[Point]) -> Tensor {
    let data = coords.iter().flat_map(|p| p.iter().map(|&v| v as Scalar)).collect();
    Tensor::new(vec![coords.len(), 3], data).expect("n×3 layout")
}

pub fn tensor_to_coords(t: &Tensor) -> Result<Vec<Point>> {
    if t.rank() != 2 || t.shape()[1] != 3 {
        return Err(Error::Dimension {
            op: "tensor_to_coords",
            axis: "columns",
            expected: 3,
            found: t.shape().get(1).copied().unwrap_or(0),
        });
    }
    Ok(t.data()
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Encode,
    Decode,
}

/// One stage of point-voxel blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PVBlockConfig {
    pub channels: usize,
    pub num_blocks: usize,
    pub voxel_resolution: usize,
    pub kernel_size: usize,
    pub dropout_rate: Scalar,
    pub direction: Direction,
}

impl PVBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("block channels must be positive".into()));
        }
        if self.num_blocks == 0 {
            return Err(Error::Config("num_blocks must be at least 1".into()));
        }
        if self.voxel_resolution < 2 {
            return Err(Error::Config(format!(
                "voxel resolution must be at least 2, got {}",
                self.voxel_resolution
            )));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}
