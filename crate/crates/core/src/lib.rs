pub mod autodiff;
pub mod chamfer;
pub mod corruption;
pub mod error;
pub mod fsio;
pub mod geometry;
pub mod kv;
pub mod layers;
pub mod model;
pub mod params;
pub mod pointvoxel;
pub mod report;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
