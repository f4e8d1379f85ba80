//! Discrete AdaBoost over depth-2 trees with hard-negative bootstrapping.
//!
//! Each node split is searched over all window features with feature values
//! quantized into 256 uniform bins per feature; the chosen split is then
//! re-evaluated on the raw feature values, so the reported tree error and the
//! sample reweighting are exact for the stored thresholds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::detect::scan_windows;
use super::{DepthTwoTree, TreeEnsemble};
use crate::imageproc::{build_pyramid, compute_channels, ChannelStack, Image, Pyramid, PyramidConfig};
use crate::{Error, Result};

const BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    /// Total tree count after each bootstrapping round; every round retrains
    /// from scratch on the enlarged negative set.
    pub stage_trees: Vec<usize>,
    /// Random windows drawn from the negative images before the first round.
    pub initial_negatives: usize,
    /// Highest-scoring false positives kept per negative image when mining.
    pub negatives_per_image: usize,
    pub max_negatives: usize,
    pub mining_stride: usize,
    /// Upper bound on a tree's vote; reached when a tree classifies the
    /// weighted training set perfectly.
    pub max_alpha: f64,
    /// Subtracted from the lowest running score seen on any training
    /// positive to obtain the soft-cascade reject threshold.
    pub reject_margin: f64,
    /// Fraction of training positives allowed to score below the acceptance
    /// threshold.
    pub accept_quantile: f64,
    pub flip_positives: bool,
    pub seed: u64,
    pub pyramid: PyramidConfig,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            stage_trees: vec![32, 128, 512, 2048],
            initial_negatives: 5000,
            negatives_per_image: 25,
            max_negatives: 10000,
            mining_stride: 1,
            max_alpha: 5.0,
            reject_margin: 1e-3,
            accept_quantile: 0.01,
            flip_positives: true,
            seed: 0,
            pyramid: PyramidConfig::default(),
        }
    }
}

/// Row-major feature vectors, one row per sample.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub num_features: usize,
    pub rows: Vec<f32>,
}

impl FeatureSet {
    pub fn new(num_features: usize) -> Self {
        Self {
            num_features,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len().checked_div(self.num_features).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn push(&mut self, row: &[f32]) {
        assert_eq!(row.len(), self.num_features);
        self.rows.extend_from_slice(row);
    }
}

/// Features of the window with top-left cell (`cx`, `cy`), in model order.
pub fn window_features(stack: &ChannelStack, cx: usize, cy: usize, cells_w: usize, cells_h: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(stack.channels * cells_w * cells_h);
    for c in 0..stack.channels {
        for y in 0..cells_h {
            let start = (c * stack.height + cy + y) * stack.width + cx;
            out.extend_from_slice(&stack.data[start..start + cells_w]);
        }
    }
    out
}

/// Per-feature uniform quantization of a sample set.
pub struct Quantized {
    pub lo: Vec<f32>,
    pub step: Vec<f32>,
    /// Feature-major bins: `bins[f * n + i]`.
    pub bins: Vec<u8>,
    pub n: usize,
}

impl Quantized {
    fn threshold(&self, f: usize, bin: usize) -> f32 {
        self.lo[f] + bin as f32 * self.step[f]
    }
}

/// Quantizes the concatenation of `sets` into 256 bins per feature.
pub fn quantize(sets: &[&FeatureSet]) -> Quantized {
    let nf = sets[0].num_features;
    let n: usize = sets.iter().map(|s| s.len()).sum();
    let mut lo = vec![f32::INFINITY; nf];
    let mut hi = vec![f32::NEG_INFINITY; nf];
    for s in sets {
        for row in s.rows.chunks_exact(nf) {
            for (f, v) in row.iter().enumerate() {
                lo[f] = lo[f].min(*v);
                hi[f] = hi[f].max(*v);
            }
        }
    }
    let step: Vec<f32> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| if h > l { (h - l) / BINS as f32 } else { 1.0 })
        .collect();
    let mut bins = vec![0u8; nf * n];
    let mut i = 0;
    for s in sets {
        for row in s.rows.chunks_exact(nf) {
            for (f, v) in row.iter().enumerate() {
                let b = ((v - lo[f]) / step[f]).floor();
                bins[f * n + i] = b.clamp(0.0, (BINS - 1) as f32) as u8;
            }
            i += 1;
        }
    }
    Quantized { lo, step, bins, n }
}

/// Root split of one tree, as selected by the histogram search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSplit {
    pub feature: usize,
    pub threshold: f32,
    /// Weighted error of the root stump with majority-labelled sides.
    pub error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BoostReport {
    /// Sum of the sample weights after each reweighting.
    pub weight_sums: Vec<f64>,
    /// Fraction of samples misclassified by the partial ensemble after each tree.
    pub training_errors: Vec<f64>,
    pub tree_errors: Vec<f64>,
    pub alphas: Vec<f64>,
    pub root_splits: Vec<RootSplit>,
}

pub struct BoostOutcome {
    pub trees: Vec<DepthTwoTree>,
    pub report: BoostReport,
}

type Hist = [f64; 2 * BINS];

fn best_split(h: &Hist) -> (f64, usize) {
    let (mut tp, mut tn) = (0.0, 0.0);
    for b in 0..BINS {
        tp += h[2 * b];
        tn += h[2 * b + 1];
    }
    let (mut lp, mut ln) = (0.0, 0.0);
    let mut best = (f64::INFINITY, 0usize);
    for b in 1..BINS {
        lp += h[2 * (b - 1)];
        ln += h[2 * (b - 1) + 1];
        let err = lp.min(ln) + (tp - lp).min(tn - ln);
        if err < best.0 {
            best = (err, b);
        }
    }
    best
}

fn accumulate(h: &mut Hist, bins: &[u8], samples: Option<&[u32]>, weights: &[f64], labels: &[u8]) {
    h.fill(0.0);
    match samples {
        None => {
            for (i, b) in bins.iter().enumerate() {
                h[2 * *b as usize + labels[i] as usize] += weights[i];
            }
        }
        Some(idx) => {
            for &i in idx {
                let i = i as usize;
                h[2 * bins[i] as usize + labels[i] as usize] += weights[i];
            }
        }
    }
}

/// Chooses (feature, bin) for the two children given the root histograms.
fn child_splits(q: &Quantized, root_h: &[Hist], small: &[u32], small_is_left: bool, weights: &[f64], labels: &[u8]) -> [(f64, usize, usize); 2] {
    let mut best = [(f64::INFINITY, 0usize, 0usize); 2];
    let mut hs: Hist = [0.0; 2 * BINS];
    let mut hl: Hist = [0.0; 2 * BINS];
    for (f, root) in root_h.iter().enumerate() {
        accumulate(&mut hs, &q.bins[f * q.n..(f + 1) * q.n], Some(small), weights, labels);
        for ((l, r), s) in hl.iter_mut().zip(root).zip(&hs) {
            *l = r - s;
        }
        let (left, right) = if small_is_left { (&hs, &hl) } else { (&hl, &hs) };
        for (slot, h) in [left, right].into_iter().enumerate() {
            let (err, b) = best_split(h);
            if err < best[slot].0 {
                best[slot] = (err, f, b);
            }
        }
    }
    best
}

/// Runs `num_trees` rounds of discrete AdaBoost. Labels: `pos` = +1, `neg` = −1.
/// Initial weights give each class half of the total mass.
pub fn boost(pos: &FeatureSet, neg: &FeatureSet, num_trees: usize, max_alpha: f64) -> BoostOutcome {
    let np = pos.len();
    let nn = neg.len();
    let n = np + nn;
    let nf = pos.num_features;
    let q = quantize(&[pos, neg]);
    // label index 0 = positive, 1 = negative
    let labels: Vec<u8> = (0..n).map(|i| (i >= np) as u8).collect();
    let mut weights: Vec<f64> = (0..n)
        .map(|i| if i < np { 0.5 / np as f64 } else { 0.5 / nn as f64 })
        .collect();
    if np == 0 || nn == 0 {
        let w = 1.0 / n.max(1) as f64;
        weights.iter_mut().for_each(|v| *v = w);
    }
    let raw = |i: usize, f: usize| -> f32 {
        if i < np {
            pos.rows[i * nf + f]
        } else {
            neg.rows[(i - np) * nf + f]
        }
    };
    let mut scores = vec![0.0f64; n];
    let mut trees = Vec::with_capacity(num_trees);
    let mut report = BoostReport::default();
    let mut root_h: Vec<Hist> = vec![[0.0; 2 * BINS]; nf];

    for _ in 0..num_trees {
        let mut root = (f64::INFINITY, 0usize, 0usize);
        for (f, hist) in root_h.iter_mut().enumerate() {
            accumulate(hist, &q.bins[f * n..(f + 1) * n], None, &weights, &labels);
            let (err, b) = best_split(hist);
            if err < root.0 {
                root = (err, f, b);
            }
        }
        let (root_err, rf, rb) = root;
        let root_bins = &q.bins[rf * n..(rf + 1) * n];
        let (left, right): (Vec<u32>, Vec<u32>) = (0..n as u32).partition(|&i| (root_bins[i as usize] as usize) < rb);
        let small_is_left = left.len() <= right.len();
        let small = if small_is_left { &left } else { &right };
        let [(_, lf, lb), (_, rgf, rgb)] = child_splits(&q, &root_h, small, small_is_left, &weights, &labels);

        let mut tree = DepthTwoTree {
            features: [rf as u32, lf as u32, rgf as u32],
            thresholds: [q.threshold(rf, rb), q.threshold(lf, lb), q.threshold(rgf, rgb)],
            leaves: [0.0; 4],
        };
        report.root_splits.push(RootSplit {
            feature: rf,
            threshold: tree.thresholds[0],
            error: root_err,
        });

        // exact leaf statistics on raw values
        let leaf_of: Vec<usize> = (0..n).map(|i| tree.leaf_index(|f| raw(i, f))).collect();
        let mut mass = [[0.0f64; 2]; 4];
        for i in 0..n {
            mass[leaf_of[i]][labels[i] as usize] += weights[i];
        }
        let sign: Vec<f64> = mass.iter().map(|m| if m[0] >= m[1] && m[0] > 0.0 { 1.0 } else { -1.0 }).collect();
        let err: f64 = mass
            .iter()
            .zip(&sign)
            .map(|(m, s)| if *s > 0.0 { m[1] } else { m[0] })
            .sum();
        let alpha = if err <= 0.0 {
            max_alpha
        } else {
            (0.5 * ((1.0 - err) / err).ln()).min(max_alpha)
        };
        if alpha <= 0.0 {
            log::debug!("boosting stopped early: weak learner error {err:.6} is no better than chance");
            break;
        }
        for (leaf, s) in tree.leaves.iter_mut().zip(&sign) {
            *leaf = alpha * s;
        }

        let mut total = 0.0;
        let mut wrong = 0usize;
        for i in 0..n {
            let y = if labels[i] == 0 { 1.0 } else { -1.0 };
            let h = sign[leaf_of[i]];
            weights[i] *= (-alpha * y * h).exp();
            total += weights[i];
            scores[i] += tree.leaves[leaf_of[i]];
            if (scores[i] > 0.0) != (y > 0.0) {
                wrong += 1;
            }
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        report.weight_sums.push(weights.iter().sum());
        report.training_errors.push(wrong as f64 / n as f64);
        report.tree_errors.push(err);
        report.alphas.push(alpha);
        trees.push(tree);
    }
    BoostOutcome { trees, report }
}

#[derive(Debug, Clone, Default)]
pub struct StageReport {
    pub trees: usize,
    pub negatives: usize,
    pub mined: usize,
    pub training_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
    pub last_boost: BoostReport,
}

/// Trains a detector with `cfg.pyramid`'s window.
///
/// Positives may be exactly window-sized or carry a symmetric context margin
/// that is a multiple of the shrink factor on each side; features are then
/// computed on the whole crop and read from the central window, which keeps
/// border cells consistent with what the detector sees inside a full frame.
pub fn train_acf(pos: &[Image], neg_sources: &[Image], cfg: &BoostConfig) -> Result<TreeEnsemble> {
    train_acf_with_report(pos, neg_sources, cfg).map(|(m, _)| m)
}

pub fn train_acf_with_report(pos: &[Image], neg_sources: &[Image], cfg: &BoostConfig) -> Result<(TreeEnsemble, TrainReport)> {
    let pc = &cfg.pyramid;
    if pos.is_empty() {
        return Err(Error::invalid("ACF training needs at least one positive"));
    }
    if neg_sources.is_empty() {
        return Err(Error::invalid("ACF training needs at least one negative source image"));
    }
    if cfg.stage_trees.is_empty() {
        return Err(Error::invalid("no boosting stages configured"));
    }
    let mut model = TreeEnsemble {
        trees: Vec::new(),
        window_width: pc.window_width,
        window_height: pc.window_height,
        shrink: pc.shrink,
        cascade_reject: f64::NEG_INFINITY,
        accept_threshold: 0.0,
    };
    model.validate()?;
    let (cw, ch) = (model.cells_w(), model.cells_h());
    let nf = model.num_features();

    let mut pos_set = FeatureSet::new(nf);
    for (k, img) in pos.iter().enumerate() {
        let (mx, my) = (img.width() as isize - pc.window_width as isize, img.height() as isize - pc.window_height as isize);
        let s = 2 * pc.shrink as isize;
        if mx < 0 || my < 0 || mx % s != 0 || my % s != 0 {
            return Err(Error::invalid(format!(
                "positive {k} is {}x{}; expected the {}x{} window plus a margin that is a multiple of {} per side",
                img.width(),
                img.height(),
                pc.window_width,
                pc.window_height,
                pc.shrink
            )));
        }
        let (ox, oy) = ((mx / s) as usize, (my / s) as usize);
        let mut add = |im: &Image| -> Result<()> {
            let stack = compute_channels(im, pc.shrink)?;
            pos_set.push(&window_features(&stack, ox, oy, cw, ch));
            Ok(())
        };
        add(img)?;
        if cfg.flip_positives {
            add(&img.flip_horizontal())?;
        }
    }

    let pyramids: Vec<Pyramid> = neg_sources
        .iter()
        .map(|img| build_pyramid(img, pc))
        .collect::<Result<_>>()?;
    let mut windows = Vec::new();
    for (p, pyr) in pyramids.iter().enumerate() {
        for (l, lvl) in pyr.levels.iter().enumerate() {
            if lvl.stack.width >= cw && lvl.stack.height >= ch {
                windows.push((p, l, lvl.stack.width - cw + 1, lvl.stack.height - ch + 1));
            }
        }
    }
    if windows.is_empty() {
        return Err(Error::invalid("negative images are all smaller than the detector window"));
    }
    let total_windows: usize = windows.iter().map(|w| w.2 * w.3).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut neg_set = FeatureSet::new(nf);
    for _ in 0..cfg.initial_negatives.min(cfg.max_negatives) {
        let mut k = rng.random_range(0..total_windows);
        for &(p, l, nx, ny) in &windows {
            if k < nx * ny {
                let stack = &pyramids[p].levels[l].stack;
                neg_set.push(&window_features(stack, k % nx, k / nx, cw, ch));
                break;
            }
            k -= nx * ny;
        }
    }

    let mut report = TrainReport::default();
    for (stage, &num_trees) in cfg.stage_trees.iter().enumerate() {
        let outcome = boost(&pos_set, &neg_set, num_trees, cfg.max_alpha);
        model.trees = outcome.trees;
        calibrate(&mut model, &pos_set, cfg);
        let mut stage_report = StageReport {
            trees: model.trees.len(),
            negatives: neg_set.len(),
            mined: 0,
            training_error: outcome.report.training_errors.last().copied().unwrap_or(1.0),
        };
        if stage + 1 < cfg.stage_trees.len() {
            let mut mined = FeatureSet::new(nf);
            for pyr in &pyramids {
                let mut hits = Vec::new();
                scan_windows(pyr, &model, cfg.mining_stride, |level, cx, cy, score| {
                    hits.push((score, level, cx, cy));
                });
                hits.sort_by(|a, b| b.0.total_cmp(&a.0));
                for &(_, level, cx, cy) in hits.iter().take(cfg.negatives_per_image) {
                    mined.push(&window_features(&pyr.levels[level].stack, cx, cy, cw, ch));
                }
            }
            stage_report.mined = mined.len();
            let keep_old = cfg.max_negatives.saturating_sub(mined.len()).min(neg_set.len());
            if keep_old < neg_set.len() {
                let mut idx: Vec<usize> = (0..neg_set.len()).collect();
                for i in 0..keep_old {
                    let j = rng.random_range(i..idx.len());
                    idx.swap(i, j);
                }
                idx.truncate(keep_old);
                idx.sort_unstable();
                let mut kept = FeatureSet::new(nf);
                for i in idx {
                    kept.push(neg_set.row(i));
                }
                neg_set = kept;
            }
            for i in 0..mined.len().min(cfg.max_negatives) {
                neg_set.push(mined.row(i));
            }
        }
        log::info!(
            "acf stage {}: {} trees, {} negatives, {} mined, training error {:.4}",
            stage,
            stage_report.trees,
            stage_report.negatives,
            stage_report.mined,
            stage_report.training_error
        );
        report.stages.push(stage_report);
        report.last_boost = outcome.report;
    }
    Ok((model, report))
}

/// Sets the acceptance threshold to the configured quantile of positive
/// scores and the reject threshold just below the lowest running score of
/// any positive, so no training positive is cascade-rejected.
fn calibrate(model: &mut TreeEnsemble, pos: &FeatureSet, cfg: &BoostConfig) {
    let mut finals = Vec::with_capacity(pos.len());
    let mut lowest = f64::INFINITY;
    for i in 0..pos.len() {
        let row = pos.row(i);
        let mut s = 0.0;
        for t in &model.trees {
            s += t.eval(|f| row[f]);
            lowest = lowest.min(s);
        }
        finals.push(s);
    }
    finals.sort_by(f64::total_cmp);
    let q = cfg.accept_quantile.clamp(0.0, 1.0);
    let idx = ((q * finals.len() as f64).floor() as usize).min(finals.len() - 1);
    // strictly below the quantile score so that sample is itself accepted
    model.accept_threshold = finals[idx] - cfg.reject_margin.max(1e-9);
    model.cascade_reject = lowest - cfg.reject_margin;
}
