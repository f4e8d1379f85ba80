//! The two-stage detector: channel-feature proposals, score filtering and CNN
//! refinement, plus the builder for the CNN's training set.

mod dataset;
mod inria;

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acf::{detect, nms, BoundingBox, Proposal, TreeEnsemble};
use crate::cnn::{classify_proposals, CnnModel, Tensor};
use crate::imageproc::{build_pyramid, Image, PyramidConfig};
use crate::{Error, Result};

pub use dataset::{build_training_set, random_deform, sample_margins, split_counts, AnnotatedImage, AugmentConfig, DatasetSpec, MiningConfig};
pub use inria::{load_inria, parse_inria_annotation};

/// Side length of the square crops fed to the CNN.
pub const CROP_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionSource {
    AcfOnly,
    AcfPlusCnn,
}

/// A kept proposal. `score` is the proposal score, never rewritten.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub source: DetectionSource,
}

/// Wall-clock seconds spent per stage on one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub acf_time: f64,
    pub cnn_time: f64,
    pub total_time: f64,
    pub fps: f64,
}

impl StageTiming {
    pub fn from_times(acf_time: f64, cnn_time: f64, total_time: f64) -> Self {
        Self {
            acf_time,
            cnn_time,
            total_time,
            fps: if total_time > 0.0 { 1.0 / total_time } else { f64::INFINITY },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub scales_per_octave: usize,
    pub stride: usize,
    pub nms_overlap: f64,
    /// Proposals scoring below this never reach the CNN. `-inf` disables the filter.
    pub score_threshold: f64,
    /// Minimum pedestrian probability for a crop to be kept.
    pub cnn_threshold: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            scales_per_octave: 8,
            stride: 1,
            nms_overlap: 0.5,
            score_threshold: f64::NEG_INFINITY,
            cnn_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub detections: Vec<Detection>,
    /// Proposals after NMS and before score filtering.
    pub proposals: Vec<Proposal>,
    /// CNN probability per crop that reached the CNN, aligned with the
    /// proposals that passed the score filter.
    pub cnn_probabilities: Vec<(Proposal, f64)>,
    pub cnn_invocations: usize,
    pub timing: StageTiming,
}

/// Runs pyramid → detect → NMS → score filter → crop → CNN on one image.
/// Without a CNN every filtered proposal becomes an `AcfOnly` detection.
pub fn detect_pedestrians(img: &Image, acf: &TreeEnsemble, cnn: Option<&CnnModel>, cfg: &CascadeConfig) -> Result<CascadeOutput> {
    let start = Instant::now();
    if img.is_empty() {
        return Ok(CascadeOutput {
            detections: Vec::new(),
            proposals: Vec::new(),
            cnn_probabilities: Vec::new(),
            cnn_invocations: 0,
            timing: StageTiming::from_times(0.0, 0.0, start.elapsed().as_secs_f64()),
        });
    }
    let pyr_cfg = PyramidConfig {
        scales_per_octave: cfg.scales_per_octave,
        shrink: acf.shrink,
        window_width: acf.window_width,
        window_height: acf.window_height,
    };
    let pyramid = build_pyramid(img, &pyr_cfg)?;
    let proposals = nms(&detect(&pyramid, acf, cfg.stride), cfg.nms_overlap);
    let acf_time = start.elapsed().as_secs_f64();

    let kept: Vec<Proposal> = proposals.iter().copied().filter(|p| p.score >= cfg.score_threshold).collect();
    let cnn_start = Instant::now();
    let (detections, cnn_probabilities) = match cnn {
        None => (
            kept.iter()
                .map(|p| Detection {
                    bbox: p.bbox,
                    score: p.score,
                    source: DetectionSource::AcfOnly,
                })
                .collect(),
            Vec::new(),
        ),
        Some(model) => {
            let crops: Vec<Tensor> = kept
                .iter()
                .map(|p| Tensor::from_image(&img.crop_resize(p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h, CROP_SIZE, CROP_SIZE)))
                .collect();
            let probs = classify_proposals(model, &crops)?;
            let dets = kept
                .iter()
                .zip(&probs)
                .filter(|(_, p)| **p >= cfg.cnn_threshold)
                .map(|(prop, _)| Detection {
                    bbox: prop.bbox,
                    score: prop.score,
                    source: DetectionSource::AcfPlusCnn,
                })
                .collect();
            (dets, kept.iter().copied().zip(probs).collect())
        }
    };
    let cnn_time = if cnn.is_some() { cnn_start.elapsed().as_secs_f64() } else { 0.0 };
    let cnn_invocations = if cnn.is_some() { kept.len() } else { 0 };
    Ok(CascadeOutput {
        detections,
        proposals,
        cnn_probabilities,
        cnn_invocations,
        timing: StageTiming::from_times(acf_time, cnn_time, start.elapsed().as_secs_f64()),
    })
}

/// Largest threshold that keeps at least `retain` of the given true-positive
/// proposal scores (scores ≥ threshold are kept).
pub fn calibrate_threshold(true_positive_scores: &[f64], retain: f64) -> Result<f64> {
    if true_positive_scores.is_empty() {
        return Err(Error::invalid("threshold calibration needs at least one true-positive score"));
    }
    if !(0.0..=1.0).contains(&retain) {
        return Err(Error::invalid("retain fraction must lie in [0, 1]"));
    }
    let mut s = true_positive_scores.to_vec();
    s.sort_by(f64::total_cmp);
    let drop = ((1.0 - retain) * s.len() as f64 + 1e-9).floor() as usize;
    Ok(s[drop.min(s.len() - 1)])
}

/// Writes one `frameId x y w h score` line per detection.
pub fn write_detections(w: &mut impl Write, frame: usize, detections: &[Detection]) -> Result<()> {
    for d in detections {
        writeln!(w, "{frame} {} {} {} {} {}", d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.score)?;
    }
    Ok(())
}

/// Parses the format written by [`write_detections`]; blank lines and lines
/// starting with `#` are skipped.
pub fn read_detections(r: impl BufRead) -> Result<Vec<(usize, BoundingBox, f64)>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::format("detections", format!("line {}: expected `frameId x y w h score`", n + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let frame: usize = f[0].parse().map_err(|_| bad())?;
        let v: Vec<f64> = f[1..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        out.push((frame, BoundingBox::new(v[0], v[1], v[2], v[3])?, v[4]));
    }
    Ok(out)
}
