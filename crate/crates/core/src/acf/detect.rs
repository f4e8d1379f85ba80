use super::model::score_with_offsets;
use super::{BoundingBox, TreeEnsemble};
use crate::imageproc::Pyramid;

/// A scored candidate window in original-image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub score: f64,
    pub level: usize,
}

/// Slides the model window over every pyramid level at `stride` cells.
///
/// Output is in scan order (level, row, column); overlapping duplicates are
/// kept for [`super::nms`] to resolve.
pub fn detect(pyr: &Pyramid, model: &TreeEnsemble, stride: usize) -> Vec<Proposal> {
    let (img_w, img_h) = (pyr.image_width as f64, pyr.image_height as f64);
    let mut out = Vec::new();
    scan_windows(pyr, model, stride, |level, cx, cy, score| {
        let lvl = &pyr.levels[level];
        let raw = BoundingBox {
            x: (cx * model.shrink) as f64 / lvl.scale_x,
            y: (cy * model.shrink) as f64 / lvl.scale_y,
            w: model.window_width as f64 / lvl.scale_x,
            h: model.window_height as f64 / lvl.scale_y,
        };
        if let Some(bbox) = raw.clip(img_w, img_h) {
            out.push(Proposal { bbox, score, level });
        }
    });
    out
}

/// Calls `hit(level, cx, cy, score)` for every window that survives the
/// soft cascade and scores above the acceptance threshold.
pub(crate) fn scan_windows(pyr: &Pyramid, model: &TreeEnsemble, stride: usize, mut hit: impl FnMut(usize, usize, usize, f64)) {
    let stride = stride.max(1);
    let (cw, ch) = (model.cells_w(), model.cells_h());
    for (level, lvl) in pyr.levels.iter().enumerate() {
        let stack = &lvl.stack;
        if stack.width < cw || stack.height < ch {
            continue;
        }
        let offsets = model.node_offsets(stack.width, stack.height);
        for cy in (0..=stack.height - ch).step_by(stride) {
            for cx in (0..=stack.width - cw).step_by(stride) {
                if let Some(score) = score_with_offsets(model, &offsets, &stack.data, cy * stack.width + cx) {
                    if score > model.accept_threshold {
                        hit(level, cx, cy, score);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acf::DepthTwoTree;
    use crate::imageproc::{build_pyramid, Image, PyramidConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
        Image::from_data(w, h, 3, data).unwrap()
    }

    fn constant_model(accept: f64) -> TreeEnsemble {
        TreeEnsemble {
            trees: vec![DepthTwoTree::constant(1.0)],
            window_width: 64,
            window_height: 64,
            shrink: 4,
            cascade_reject: f64::NEG_INFINITY,
            accept_threshold: accept,
        }
    }

    #[test]
    fn constant_scorer_returns_every_position() {
        let pyr = build_pyramid(&random_image(96, 80, 1), &PyramidConfig::default()).unwrap();
        let props = detect(&pyr, &constant_model(0.0), 1);
        let expected: usize = pyr
            .levels
            .iter()
            .map(|l| (l.stack.width - 15) * (l.stack.height - 15))
            .sum();
        assert_eq!(props.len(), expected);
        assert!(props.iter().all(|p| p.score == 1.0));
        assert!(props.iter().all(|p| p.bbox.right() <= 96.0 && p.bbox.bottom() <= 80.0));
    }

    #[test]
    fn empty_pyramid_gives_nothing() {
        let pyr = build_pyramid(&random_image(32, 32, 2), &PyramidConfig::default()).unwrap();
        assert!(detect(&pyr, &constant_model(0.0), 1).is_empty());
    }

    #[test]
    fn cascade_output_is_a_score_equal_subset() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trees: Vec<_> = (0..40)
            .map(|_| DepthTwoTree {
                features: [rng.random_range(0..2560), rng.random_range(0..2560), rng.random_range(0..2560)],
                thresholds: [rng.random_range(0.0..4.0), rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)],
                leaves: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            })
            .collect();
        let mut full = TreeEnsemble {
            trees,
            window_width: 64,
            window_height: 64,
            shrink: 4,
            cascade_reject: f64::NEG_INFINITY,
            accept_threshold: -0.5,
        };
        let pyr = build_pyramid(&random_image(100, 90, 3), &PyramidConfig::default()).unwrap();
        let all = detect(&pyr, &full, 1);
        full.cascade_reject = -1.0;
        let casc = detect(&pyr, &full, 1);
        assert!(casc.len() < all.len());
        for p in &casc {
            assert!(all.iter().any(|q| q == p));
        }
    }
}
