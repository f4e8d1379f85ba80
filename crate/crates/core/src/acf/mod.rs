//! Aggregate-channel-feature sliding-window detector.
//!
//! A [`TreeEnsemble`] of depth-2 decision trees scores every window position
//! of every pyramid level. Evaluation is a soft cascade: the running sum of
//! tree outputs is checked after each tree and the window is abandoned as soon
//! as it drops below [`TreeEnsemble::cascade_reject`]. Windows whose final
//! score exceeds [`TreeEnsemble::accept_threshold`] become [`Proposal`]s.

mod bbox;
mod detect;
mod model;
mod nms;
mod train;

pub use bbox::BoundingBox;
pub use detect::{detect, Proposal};
pub use model::{DepthTwoTree, TreeEnsemble, MODEL_MAGIC, MODEL_VERSION};
pub use nms::nms;
pub use train::{
    boost, quantize, train_acf, train_acf_with_report, window_features, BoostConfig, BoostOutcome,
    BoostReport, FeatureSet, RootSplit, TrainReport,
};
