//! Rotation-invariant learned descriptors for 3D point cloud registration.
//!
//! The pipeline: estimate a local reference frame at each keypoint, express
//! its neighbourhood in that frame, voxelize it into a smoothed density
//! grid, and map the grid to a unit-length descriptor with a small 3D CNN
//! trained with a soft-margin batch-hard triplet loss. Descriptors are
//! matched by mutual nearest neighbours and fed to RANSAC; the evaluation
//! module scores correspondence sets by inlier ratio and recall.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Numeric kernels
// index several parallel arrays with one loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod lrf;
pub mod matching;
pub mod net;
pub mod par;
pub mod sdv;
pub mod train;

pub use error::{Error, Result};
pub use geometry::{Point, PointCloud, RigidTransform, SpatialIndex};
