//! Synthetic scenes, scripted experiments and evaluation for the
//! pedestrian-detection and navigation stack.

pub mod bench;
pub mod camera;
pub mod config;
pub mod error;
pub mod eval;
pub mod output;
pub mod pipeline;
pub mod render;
pub mod scenarios;
pub mod script;
pub mod shapes;
pub mod training;

pub use error::{Error, Result};
