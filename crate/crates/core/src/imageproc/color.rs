//! sRGB → CIE L*u*v* (D65) with a fixed affine rescale into [0, 1].
//!
//! The rescale uses
//!
//! ```text
//! L' = L* / 100
//! u' = (u* + 84) / 260
//! v' = (v* + 135) / 243
//! ```
//!
//! clamped to [0, 1]. The offsets cover the u*/v* extent of the sRGB gamut
//! (u* ∈ [-83.1, 175.1], v* ∈ [-134.1, 107.4]), so the achromatic axis maps to
//! u' = 84/260, v' = 135/243.

use super::Image;
use crate::{Error, Result};

pub const L_SCALE: f64 = 100.0;
pub const U_OFFSET: f64 = 84.0;
pub const U_RANGE: f64 = 260.0;
pub const V_OFFSET: f64 = 135.0;
pub const V_RANGE: f64 = 243.0;

// linear sRGB -> XYZ, D65
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

struct WhitePoint {
    y: f64,
    un: f64,
    vn: f64,
}

fn white_point() -> WhitePoint {
    let [x, y, z] = to_xyz([1.0, 1.0, 1.0]);
    let d = x + 15.0 * y + 3.0 * z;
    WhitePoint {
        y,
        un: 4.0 * x / d,
        vn: 9.0 * y / d,
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(RGB_TO_XYZ.iter()) {
        *o = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    out
}

fn luv_unscaled(rgb: [f64; 3], white: &WhitePoint) -> [f64; 3] {
    let lin = [srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2])];
    let [x, y, z] = to_xyz(lin);
    let yr = y / white.y;
    let l = if yr > (6.0f64 / 29.0).powi(3) {
        116.0 * yr.cbrt() - 16.0
    } else {
        (29.0f64 / 3.0).powi(3) * yr
    };
    let d = x + 15.0 * y + 3.0 * z;
    let (up, vp) = if d > 0.0 {
        (4.0 * x / d, 9.0 * y / d)
    } else {
        (white.un, white.vn)
    };
    [l, 13.0 * l * (up - white.un), 13.0 * l * (vp - white.vn)]
}

/// Converts an RGB image to rescaled LUV. Non-RGB input is rejected.
pub fn rgb_to_luv(img: &Image) -> Result<Image> {
    if img.depth() != 3 {
        return Err(Error::invalid(format!(
            "LUV conversion needs a 3-channel image, got {} channels",
            img.depth()
        )));
    }
    let white = white_point();
    let mut data = Vec::with_capacity(img.data().len());
    for px in img.data().chunks_exact(3) {
        let [l, u, v] = luv_unscaled([px[0] as f64, px[1] as f64, px[2] as f64], &white);
        data.push((l / L_SCALE).clamp(0.0, 1.0) as f32);
        data.push(((u + U_OFFSET) / U_RANGE).clamp(0.0, 1.0) as f32);
        data.push(((v + V_OFFSET) / V_RANGE).clamp(0.0, 1.0) as f32);
    }
    Ok(Image::from_raw(img.width(), img.height(), 3, data))
}
