//! Pedestrian detection and human-aware navigation building blocks.
//!
//! The detection side is a two-stage cascade: a boosted-tree sliding-window
//! detector over aggregated channel features produces scored proposals, and a
//! small convolutional network rejects the proposals that are not pedestrians.
//! Surviving detections are projected onto the floor plane, tracked with a
//! constant-velocity Kalman filter and fed to an A* planner whose cost map
//! encodes personal space and the pass-on-the-left rule.
//!
//! Modules:
//!
//! - [`imageproc`]: LUV + gradient channels, block aggregation, pyramids.
//! - [`acf`]: boosted depth-2 trees, soft-cascade detection, NMS, training.
//! - [`cnn`]: forward/backward, SGD with momentum, transfer initialization.
//! - [`cascade`]: the full detector and the CNN training-set builder.
//! - [`tracker`]: Kalman filter, NN / NNJPDA association, track lifecycle.
//! - [`geometry`]: foot points, DLT homography calibration, floor projection.
//! - [`planner`]: occupancy grids, human cost fields, A*, replanning.

pub mod acf;
pub mod cascade;
pub mod cnn;
pub mod error;
pub mod geometry;
pub mod imageproc;
pub mod planner;
pub mod tracker;

pub use error::{Error, Result};
