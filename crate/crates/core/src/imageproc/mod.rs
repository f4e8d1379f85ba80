//! Image containers, LUV + gradient channel computation and the multi-scale
//! channel pyramid the sliding-window detector runs over.
//!
//! Channel layout of a [`ChannelStack`] (10 channels):
//!
//! | index | content                                   |
//! |-------|-------------------------------------------|
//! | 0..3  | L, u, v rescaled to [0, 1]                |
//! | 3     | gradient magnitude (max over colour)      |
//! | 4..10 | magnitude split into 6 orientation bins   |

mod channels;
mod color;
mod gradient;
pub mod io;
mod pyramid;

pub use channels::{aggregate, block_sum, compute_channels, smooth_cells, ChannelStack, NUM_CHANNELS};
pub use color::{rgb_to_luv, L_SCALE, U_OFFSET, U_RANGE, V_OFFSET, V_RANGE};
pub use gradient::{gradient_channels, NUM_ORIENTATIONS};
pub use pyramid::{build_pyramid, Pyramid, PyramidConfig, PyramidLevel};

use crate::{Error, Result};

/// Interleaved (row, column, channel) image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    depth: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, depth: usize) -> Self {
        Self {
            width,
            height,
            depth,
            data: vec![0.0; width * height * depth],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f32]) -> Self {
        let depth = value.len();
        let mut data = Vec::with_capacity(width * height * depth);
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self {
            width,
            height,
            depth,
            data,
        }
    }

    /// Wraps raw interleaved data, checking length and value range.
    pub fn from_data(width: usize, height: usize, depth: usize, data: Vec<f32>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("image depth must be at least 1"));
        }
        if data.len() != width * height * depth {
            return Err(Error::invalid(format!(
                "image data has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                depth
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            depth,
            data,
        })
    }

    /// Like [`Image::from_data`] but without the [0, 1] range check, for
    /// intermediate channel images (e.g. gradient magnitudes).
    pub(crate) fn from_raw(width: usize, height: usize, depth: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * depth);
        Self {
            width,
            height,
            depth,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.depth + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * self.depth + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.depth;
        &self.data[i..i + self.depth]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.depth;
        &mut self.data[i..i + self.depth]
    }

    /// Pixel lookup with coordinates clamped to the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    /// Extracts a `w`×`h` region starting at (`x`, `y`); pixels outside the
    /// image replicate the nearest border pixel.
    pub fn crop(&self, x: isize, y: isize, w: usize, h: usize) -> Image {
        let mut out = Image::new(w, h, self.depth);
        for oy in 0..h {
            for ox in 0..w {
                for c in 0..self.depth {
                    let v = self.get_clamped(x + ox as isize, y + oy as isize, c);
                    out.set(ox, oy, c, v);
                }
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = Image::new(self.width, self.height, self.depth);
        for y in 0..self.height {
            for x in 0..self.width {
                let src = self.pixel(self.width - 1 - x, y);
                out.pixel_mut(x, y).copy_from_slice(src);
            }
        }
        out
    }

    /// Bilinear resampling with pixel-centre alignment.
    ///
    /// Source coordinate of output pixel `x` is `(x + 0.5) * W / w - 0.5`,
    /// clamped to the image; the same holds vertically.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Image {
        let mut out = Image::new(width, height, self.depth);
        if self.is_empty() || width == 0 || height == 0 {
            return out;
        }
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let taps = |o: usize, scale: f64, n: usize| -> (usize, usize, f32) {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, (s - i0 as f64) as f32)
        };
        let xs: Vec<_> = (0..width).map(|x| taps(x, sx, self.width)).collect();
        for y in 0..height {
            let (y0, y1, fy) = taps(y, sy, self.height);
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                for c in 0..self.depth {
                    let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
                    let bot = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
                    out.set(x, y, c, top * (1.0 - fy) + bot * fy);
                }
            }
        }
        out
    }

    /// Crops a possibly fractional box and resamples it to `width`×`height`
    /// with bilinear interpolation, replicating border pixels outside the image.
    pub fn crop_resize(&self, bx: f64, by: f64, bw: f64, bh: f64, width: usize, height: usize) -> Image {
        let mut out = Image::new(width, height, self.depth);
        if self.is_empty() {
            return out;
        }
        let sx = bw / width as f64;
        let sy = bh / height as f64;
        for oy in 0..height {
            let fy = by + (oy as f64 + 0.5) * sy - 0.5;
            let y0 = fy.floor();
            let wy = (fy - y0) as f32;
            for ox in 0..width {
                let fx = bx + (ox as f64 + 0.5) * sx - 0.5;
                let x0 = fx.floor();
                let wx = (fx - x0) as f32;
                let (x0, y0) = (x0 as isize, y0 as isize);
                for c in 0..self.depth {
                    let a = self.get_clamped(x0, y0, c);
                    let b = self.get_clamped(x0 + 1, y0, c);
                    let d = self.get_clamped(x0, y0 + 1, c);
                    let e = self.get_clamped(x0 + 1, y0 + 1, c);
                    let top = a * (1.0 - wx) + b * wx;
                    let bot = d * (1.0 - wx) + e * wx;
                    out.set(ox, oy, c, top * (1.0 - wy) + bot * wy);
                }
            }
        }
        out
    }

    /// Pads to the given size by replicating the last column / row.
    pub fn pad_replicate(&self, width: usize, height: usize) -> Image {
        debug_assert!(width >= self.width && height >= self.height);
        self.crop(0, 0, width, height)
    }
}
