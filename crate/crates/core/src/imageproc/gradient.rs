use std::f64::consts::PI;

use super::Image;

pub const NUM_ORIENTATIONS: usize = 6;

/// Gradient magnitude plus orientation histogram channels.
///
/// Output channel 0 is the magnitude of the colour channel with the strongest
/// gradient at each pixel (centred differences, one-sided at the border).
/// Channels 1..=6 split that magnitude over 6 orientation bins covering
/// [0, π); bin `k` is centred on `k·π/6` and the magnitude is shared linearly
/// between the two nearest bins, so the six channels sum to channel 0.
pub fn gradient_channels(img: &Image) -> Image {
    let (w, h, d) = (img.width(), img.height(), img.depth());
    let depth = 1 + NUM_ORIENTATIONS;
    let mut out = vec![0.0f32; w * h * depth];
    if img.is_empty() {
        return Image::from_raw(w, h, depth, out);
    }
    let bin_width = PI / NUM_ORIENTATIONS as f64;
    for y in 0..h {
        let (ya, yb, ys) = diff_taps(y, h);
        for x in 0..w {
            let (xa, xb, xs) = diff_taps(x, w);
            let mut best = (0.0f64, 0.0f64, 0.0f64);
            for c in 0..d {
                let gx = (img.get(xb, y, c) as f64 - img.get(xa, y, c) as f64) * xs;
                let gy = (img.get(x, yb, c) as f64 - img.get(x, ya, c) as f64) * ys;
                let m2 = gx * gx + gy * gy;
                if m2 > best.0 {
                    best = (m2, gx, gy);
                }
            }
            let (m2, gx, gy) = best;
            if m2 == 0.0 {
                continue;
            }
            let mag = m2.sqrt();
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += PI;
            }
            let pos = theta / bin_width;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as usize) % NUM_ORIENTATIONS;
            let b1 = (b0 + 1) % NUM_ORIENTATIONS;
            let base = (y * w + x) * depth;
            out[base] = mag as f32;
            out[base + 1 + b0] += ((1.0 - frac) * mag) as f32;
            out[base + 1 + b1] += (frac * mag) as f32;
        }
    }
    Image::from_raw(w, h, depth, out)
}

/// Neighbour indices and scale for the derivative at `i` along an axis of
/// length `n`: centred (÷2) inside, one-sided at the ends.
#[inline]
fn diff_taps(i: usize, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        (0, 0, 0.0)
    } else if i == 0 {
        (0, 1, 1.0)
    } else if i == n - 1 {
        (n - 2, n - 1, 1.0)
    } else {
        (i - 1, i + 1, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_no_gradient() {
        let out = gradient_channels(&Image::filled(9, 7, &[0.3, 0.6, 0.1]));
        assert_eq!(out.depth(), 7);
        assert!(out.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vertical_step_edge_lands_in_bin_zero() {
        let mut img = Image::new(8, 6, 3);
        for y in 0..6 {
            for x in 4..8 {
                img.pixel_mut(x, y).copy_from_slice(&[1.0, 1.0, 1.0]);
            }
        }
        let out = gradient_channels(&img);
        for y in 0..6 {
            for x in 0..8 {
                let m = out.get(x, y, 0);
                if x == 3 || x == 4 {
                    assert!((m - 0.5).abs() < 1e-6);
                    assert!((out.get(x, y, 1) - m).abs() < 1e-6);
                } else {
                    assert_eq!(m, 0.0);
                }
            }
        }
    }

    #[test]
    fn orientation_bins_sum_to_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..20 * 15 * 3).map(|_| rng.random()).collect();
        let img = Image::from_data(20, 15, 3, data).unwrap();
        let out = gradient_channels(&img);
        for px in out.data().chunks_exact(7) {
            let sum: f32 = px[1..].iter().sum();
            assert!((sum - px[0]).abs() <= 1e-6, "{} vs {}", sum, px[0]);
            assert!(px.iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }
}
