use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CROP_SIZE;
use crate::acf::{detect, nms, BoundingBox, TreeEnsemble};
use crate::cnn::{LabeledSet, Tensor};
use crate::imageproc::{build_pyramid, Image, PyramidConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip: bool,
    pub deform: bool,
    /// Inclusive range of pixels removed from each side by a deformation.
    pub deform_range: (usize, usize),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: true,
            deform: true,
            deform_range: (0, 5),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub per_image: usize,
    pub max_total: usize,
    pub stride: usize,
    pub scales_per_octave: usize,
    pub nms_overlap: f64,
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            per_image: 10,
            max_total: 20000,
            stride: 1,
            scales_per_octave: 8,
            nms_overlap: 0.5,
            val_fraction: 0.1,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotatedImage {
    pub image: Image,
    pub boxes: Vec<BoundingBox>,
}

/// Crops for CNN training. Positives are ordered: ground-truth crops, their
/// flips, then deformed copies of the first two groups.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub positives: Vec<Image>,
    pub negatives: Vec<Image>,
    /// Positive counts after each augmentation step: ground truth, with
    /// flips, with deformations.
    pub positive_counts: [usize; 3],
    pub val_fraction: f64,
}

/// Training/validation sizes for `n` samples: the validation set receives
/// `floor(val_fraction · (n − 1))` samples and training the rest.
pub fn split_counts(n: usize, val_fraction: f64) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let val = ((val_fraction.clamp(0.0, 1.0) * (n - 1) as f64).floor() as usize).min(n - 1);
    (n - val, val)
}

impl DatasetSpec {
    pub fn train_fraction(&self) -> f64 {
        1.0 - self.val_fraction
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shuffled training/validation split (label 1 = pedestrian).
    pub fn split(&self, seed: u64) -> (LabeledSet, LabeledSet) {
        let mut items: Vec<(&Image, usize)> = self.positives.iter().map(|i| (i, 1)).chain(self.negatives.iter().map(|i| (i, 0))).collect();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (n_train, _) = split_counts(items.len(), self.val_fraction);
        let mut train = LabeledSet::default();
        let mut val = LabeledSet::default();
        for (k, (img, label)) in items.into_iter().enumerate() {
            let t = Tensor::from_image(img);
            if k < n_train {
                train.push(t, label);
            } else {
                val.push(t, label);
            }
        }
        (train, val)
    }
}

/// Draws the four side margins (left, top, right, bottom) uniformly from the
/// inclusive range.
pub fn sample_margins(rng: &mut impl Rng, range: (usize, usize)) -> [usize; 4] {
    let mut m = [0; 4];
    for v in &mut m {
        *v = rng.random_range(range.0..=range.1);
    }
    m
}

/// Removes a random margin from each side and resizes back to the input size.
pub fn random_deform(crop: &Image, range: (usize, usize), seed: u64) -> Result<Image> {
    if range.0 > range.1 {
        return Err(Error::invalid("deformation range is empty"));
    }
    if 2 * range.1 >= crop.width() || 2 * range.1 >= crop.height() {
        return Err(Error::invalid(format!(
            "deformation range up to {} exceeds half of the {}x{} crop",
            range.1,
            crop.width(),
            crop.height()
        )));
    }
    let [l, t, r, b] = sample_margins(&mut ChaCha8Rng::seed_from_u64(seed), range);
    if l + t + r + b == 0 {
        return Ok(crop.clone());
    }
    let (w, h) = (crop.width(), crop.height());
    Ok(crop.crop_resize(l as f64, t as f64, (w - l - r) as f64, (h - t - b) as f64, w, h))
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Builds the CNN training set: ground-truth crops, horizontal flips, random
/// deformations, and negatives mined by `miner` on pedestrian-free images.
pub fn build_training_set(
    positive_images: &[AnnotatedImage],
    negative_images: &[Image],
    aug: &AugmentConfig,
    miner: &TreeEnsemble,
    mining: &MiningConfig,
) -> Result<DatasetSpec> {
    let mut positives: Vec<Image> = positive_images
        .iter()
        .flat_map(|a| a.boxes.iter().map(move |b| a.image.crop_resize(b.x, b.y, b.w, b.h, CROP_SIZE, CROP_SIZE)))
        .collect();
    if positives.is_empty() {
        return Err(Error::invalid("no positive annotations: the training set needs at least one pedestrian box"));
    }
    let base = positives.len();
    if aug.flip {
        let flipped: Vec<Image> = positives.iter().map(Image::flip_horizontal).collect();
        positives.extend(flipped);
    }
    let after_flip = positives.len();
    if aug.deform {
        let mut deformed = Vec::with_capacity(after_flip);
        for (i, p) in positives.iter().enumerate() {
            deformed.push(random_deform(p, aug.deform_range, mix_seed(aug.seed, i))?);
        }
        positives.extend(deformed);
    }
    let counts = [base, after_flip, positives.len()];

    let pyr_cfg = PyramidConfig {
        scales_per_octave: mining.scales_per_octave,
        shrink: miner.shrink,
        window_width: miner.window_width,
        window_height: miner.window_height,
    };
    let mut negatives = Vec::new();
    'images: for img in negative_images {
        let pyramid = build_pyramid(img, &pyr_cfg)?;
        let found = nms(&detect(&pyramid, miner, mining.stride), mining.nms_overlap);
        for p in found.iter().take(mining.per_image) {
            if negatives.len() >= mining.max_total {
                break 'images;
            }
            negatives.push(img.crop_resize(p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h, CROP_SIZE, CROP_SIZE));
        }
    }
    if negatives.is_empty() {
        return Err(Error::invalid(
            "the miner found no negatives on the pedestrian-free images; weaken the miner (lower its acceptance threshold or use an earlier training stage)",
        ));
    }
    log::info!("training set: {} positives ({base} annotated), {} mined negatives", positives.len(), negatives.len());
    Ok(DatasetSpec {
        positives,
        negatives,
        positive_counts: counts,
        val_fraction: mining.val_fraction,
    })
}
