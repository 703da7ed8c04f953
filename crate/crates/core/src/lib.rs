//! Learned-context octree compression for LiDAR point clouds.

pub mod bits;
pub mod cli;
pub mod codec;
pub mod coder;
pub mod context;
pub mod entropy;
pub mod metrics;
pub mod error;
pub mod nn;
pub mod octree;
pub mod pointcloud;

pub use error::{Error, Result};
