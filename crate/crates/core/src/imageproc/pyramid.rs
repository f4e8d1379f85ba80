use serde::{Deserialize, Serialize};

use super::{compute_channels, ChannelStack, Image};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidConfig {
    pub scales_per_octave: usize,
    pub shrink: usize,
    /// Detector window in pixels.
    pub window_width: usize,
    pub window_height: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            scales_per_octave: 8,
            shrink: 4,
            window_width: 64,
            window_height: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    /// Nominal scale `2^(-i / scales_per_octave)`.
    pub scale: f64,
    /// Actual per-axis ratios after rounding the level size to whole pixels.
    pub scale_x: f64,
    pub scale_y: f64,
    pub stack: ChannelStack,
}

#[derive(Debug, Clone, Default)]
pub struct Pyramid {
    pub levels: Vec<PyramidLevel>,
    /// Size of the source image; detections are un-scaled into this frame.
    pub image_width: usize,
    pub image_height: usize,
    /// Set when the source image was smaller than the detector window.
    pub too_small: bool,
}

impl Pyramid {
    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Scales `2^(-i/n)` for i = 0, 1, ... while the resized image still holds
/// one detector window.
pub(crate) fn scale_ladder(width: usize, height: usize, cfg: &PyramidConfig) -> Vec<f64> {
    let mut scales = Vec::new();
    let n = cfg.scales_per_octave.max(1) as f64;
    for i in 0.. {
        let s = (-(i as f64) / n).exp2();
        let w = (s * width as f64).round() as usize;
        let h = (s * height as f64).round() as usize;
        if w < cfg.window_width || h < cfg.window_height {
            break;
        }
        scales.push(s);
    }
    scales
}

/// Computes real channels at every scale of the ladder.
pub fn build_pyramid(img: &Image, cfg: &PyramidConfig) -> Result<Pyramid> {
    if img.width() < cfg.window_width || img.height() < cfg.window_height {
        if !img.is_empty() {
            log::warn!(
                "image {}x{} is smaller than the {}x{} detector window",
                img.width(),
                img.height(),
                cfg.window_width,
                cfg.window_height
            );
        }
        return Ok(Pyramid {
            levels: Vec::new(),
            image_width: img.width(),
            image_height: img.height(),
            too_small: true,
        });
    }
    let mut levels = Vec::new();
    for s in scale_ladder(img.width(), img.height(), cfg) {
        let w = (s * img.width() as f64).round() as usize;
        let h = (s * img.height() as f64).round() as usize;
        let resized = img.resize_bilinear(w, h);
        levels.push(PyramidLevel {
            scale: s,
            scale_x: w as f64 / img.width() as f64,
            scale_y: h as f64 / img.height() as f64,
            stack: compute_channels(&resized, cfg.shrink)?,
        });
    }
    Ok(Pyramid {
        levels,
        image_width: img.width(),
        image_height: img.height(),
        too_small: false,
    })
}
