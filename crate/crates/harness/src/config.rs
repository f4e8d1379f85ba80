//! Layered configuration: built-in defaults, then an optional TOML file, then
//! command-line flags (applied by the caller).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::pipeline::PipelineConfig;
use crate::training::TrainingConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// IoU needed for a detection to match a person.
    pub iou_threshold: f64,
    /// Fraction of true-positive proposal scores a calibrated threshold keeps.
    pub retain: f64,
    /// Planted scenes used to calibrate the proposal-score threshold.
    pub calibration_scenes: usize,
    /// Planted scenes used for evaluation and timing.
    pub eval_scenes: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            retain: 0.99,
            calibration_scenes: 25,
            eval_scenes: 25,
            seed: 0xE7A1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub training: TrainingConfig,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            training: TrainingConfig::desk(),
            pipeline: PipelineConfig::desk(),
            eval: EvalConfig::default(),
        }
    }
}

impl HarnessConfig {
    /// Overlays the TOML `text` on the defaults key by key.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let overlay: toml::Table = toml::from_str(text).map_err(|e| cfg(&e))?;
        let mut base = toml::Table::try_from(Self::default()).map_err(|e| cfg(&e))?;
        merge(&mut base, overlay);
        base.try_into().map_err(|e| cfg(&e))
    }

    /// Defaults overlaid with `path` when given; missing keys keep their defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p)?),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
