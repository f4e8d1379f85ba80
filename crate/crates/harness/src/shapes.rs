//! Auxiliary classification task used to pretrain the CNN: eight geometric
//! shape classes drawn on noisy backgrounds.

use pednav_core::cnn::{LabeledSet, Tensor};
use pednav_core::imageproc::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::render::{mix, Canvas};

pub const SHAPE_CLASSES: [&str; 8] = ["circle", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar"];

fn luminance(c: [f32; 3]) -> f32 {
    0.3 * c[0] + 0.59 * c[1] + 0.11 * c[2]
}

fn rotated(cx: f64, cy: f64, pts: &[(f64, f64)], angle: f64) -> Vec<(f64, f64)> {
    let (s, c) = angle.sin_cos();
    pts.iter().map(|(x, y)| (cx + x * c - y * s, cy + x * s + y * c)).collect()
}

/// One `size`×`size` sample of `class`.
pub fn shape_image(class: usize, size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = [rng.random_range(0.0..1.0f32), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let fg = loop {
        let c = [rng.random_range(0.0..1.0f32), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        if (luminance(c) - luminance(bg)).abs() > 0.25 {
            break c;
        }
    };
    let mut cv = Canvas::new(Image::filled(size, size, &bg));
    let k = size as f64 / 64.0;
    let (cx, cy) = (size as f64 / 2.0 + rng.random_range(-8.0..8.0) * k, size as f64 / 2.0 + rng.random_range(-8.0..8.0) * k);
    let r = rng.random_range(12.0..22.0) * k;
    let tilt = rng.random_range(-0.25..0.25);
    let paint = move |_: f64, _: f64| fg;
    match class {
        0 => cv.ellipse((cx, cy), r, r, 1.0, paint),
        1 => cv.polygon(&rotated(cx, cy, &[(-r, -r), (r, -r), (r, r), (-r, r)], tilt), 1.0, paint),
        2 => cv.polygon(&rotated(cx, cy, &[(0.0, -r), (0.87 * r, 0.5 * r), (-0.87 * r, 0.5 * r)], tilt), 1.0, paint),
        3 => {
            let t = 0.3 * r;
            cv.polygon(&rotated(cx, cy, &[(-r, -t), (r, -t), (r, t), (-r, t)], tilt), 1.0, paint);
            cv.polygon(&rotated(cx, cy, &[(-t, -r), (t, -r), (t, r), (-t, r)], tilt), 1.0, paint);
        }
        4 => {
            cv.ellipse((cx, cy), r, r, 1.0, paint);
            cv.ellipse((cx, cy), 0.55 * r, 0.55 * r, 1.0, move |_, _| bg);
        }
        5 => cv.polygon(&rotated(cx, cy, &[(0.0, -r), (r, 0.0), (0.0, r), (-r, 0.0)], tilt * 0.5), 1.0, paint),
        6 => cv.polygon(&rotated(cx, cy, &[(-r, -0.3 * r), (r, -0.3 * r), (r, 0.3 * r), (-r, 0.3 * r)], tilt), 1.0, paint),
        _ => cv.polygon(&rotated(cx, cy, &[(-0.3 * r, -r), (0.3 * r, -r), (0.3 * r, r), (-0.3 * r, r)], tilt), 1.0, paint),
    }
    let mut img = cv.img;
    let noise = Normal::new(0.0f32, 0.04).expect("valid noise");
    for v in img.data_mut() {
        *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    img
}

/// `per_class` samples of every class, interleaved by class.
pub fn shape_samples(per_class: usize, size: usize, seed: u64) -> Vec<(Image, usize)> {
    let mut out = Vec::with_capacity(per_class * SHAPE_CLASSES.len());
    for i in 0..per_class {
        for class in 0..SHAPE_CLASSES.len() {
            out.push((shape_image(class, size, mix(seed, (i * SHAPE_CLASSES.len() + class) as u64)), class));
        }
    }
    out
}

pub fn shape_dataset(per_class: usize, size: usize, seed: u64) -> LabeledSet {
    let mut set = LabeledSet::default();
    for (img, class) in shape_samples(per_class, size, seed) {
        set.push(Tensor::from_image(&img), class);
    }
    set
}
