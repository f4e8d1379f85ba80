//! Detection metrics: greedy IoU matching, recall / precision / false
//! positives per frame, and the log-average miss rate over an FPPI sweep.

use pednav_core::acf::BoundingBox;
use serde::{Deserialize, Serialize};

use crate::pipeline::FrameRecord;
use crate::render::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Matched the ground-truth entry with this index.
    TruePositive(usize),
    /// Overlaps an ignored person only.
    Ignored,
    FalsePositive,
}

/// Greedy matching, highest score first. Each usable ground-truth box takes
/// at most one detection; ignored boxes absorb any number. Returns one
/// outcome per detection, in input order.
pub fn match_frame(truth: &[GroundTruth], dets: &[(BoundingBox, f64)], iou_threshold: f64) -> Vec<Outcome> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|a, b| dets[*b].1.total_cmp(&dets[*a].1).then(a.cmp(b)));
    let mut taken = vec![false; truth.len()];
    let mut out = vec![Outcome::FalsePositive; dets.len()];
    for i in order {
        let b = &dets[i].0;
        let best = |ignored: bool, taken: &[bool]| {
            truth
                .iter()
                .enumerate()
                .filter(|(g, t)| t.ignore == ignored && !taken[*g])
                .map(|(g, t)| (g, t.bbox.iou(b)))
                .filter(|(_, o)| *o >= iou_threshold)
                .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
        };
        if let Some((g, _)) = best(false, &taken) {
            taken[g] = true;
            out[i] = Outcome::TruePositive(g);
        } else if best(true, &taken).is_some() {
            out[i] = Outcome::Ignored;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: usize,
    /// Usable (non-ignored) ground-truth people.
    pub ground_truth: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    /// 1 when there is no usable ground truth.
    pub recall: f64,
    /// 1 when there are no counted detections.
    pub precision: f64,
    pub fp_per_frame: f64,
    pub log_average_miss_rate: Option<f64>,
}

/// Metrics over `(truth, detections)` frames.
pub fn evaluate_frames<'a>(frames: impl IntoIterator<Item = (&'a [GroundTruth], Vec<(BoundingBox, f64)>)>, iou_threshold: f64) -> Metrics {
    let mut m = Metrics::default();
    for (truth, dets) in frames {
        m.frames += 1;
        m.ground_truth += truth.iter().filter(|g| !g.ignore).count();
        for o in match_frame(truth, &dets, iou_threshold) {
            match o {
                Outcome::TruePositive(_) => m.true_positives += 1,
                Outcome::FalsePositive => m.false_positives += 1,
                Outcome::Ignored => {}
            }
        }
    }
    let counted = m.true_positives + m.false_positives;
    m.recall = if m.ground_truth == 0 { 1.0 } else { m.true_positives as f64 / m.ground_truth as f64 };
    m.precision = if counted == 0 { 1.0 } else { m.true_positives as f64 / counted as f64 };
    m.fp_per_frame = if m.frames == 0 { 0.0 } else { m.false_positives as f64 / m.frames as f64 };
    m
}

/// Log-average miss rate over nine FPPI references log-spaced in
/// [1e-2, 1e0]; each reference takes the lowest miss rate reached at or
/// below it. `frames` carry candidates ranked by the swept confidence.
pub fn log_average_miss_rate<'a>(frames: impl IntoIterator<Item = (&'a [GroundTruth], Vec<(BoundingBox, f64)>)>, iou_threshold: f64) -> Option<f64> {
    let mut ranked: Vec<(f64, Outcome)> = Vec::new();
    let mut n_frames = 0usize;
    let mut n_truth = 0usize;
    for (truth, dets) in frames {
        n_frames += 1;
        n_truth += truth.iter().filter(|g| !g.ignore).count();
        // Greedy matching over a frame's candidates in confidence order
        // makes every threshold's matching a prefix of the full one.
        for (o, (_, c)) in match_frame(truth, &dets, iou_threshold).into_iter().zip(&dets) {
            ranked.push((*c, o));
        }
    }
    if n_frames == 0 || n_truth == 0 {
        return None;
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < ranked.len() {
        let c = ranked[i].0;
        while i < ranked.len() && ranked[i].0 == c {
            match ranked[i].1 {
                Outcome::TruePositive(_) => tp += 1,
                Outcome::FalsePositive => fp += 1,
                Outcome::Ignored => {}
            }
            i += 1;
        }
        curve.push((fp as f64 / n_frames as f64, 1.0 - tp as f64 / n_truth as f64));
    }
    let refs = (0..9).map(|k| 10f64.powf(-2.0 + 2.0 * k as f64 / 8.0));
    let logs: Vec<f64> = refs
        .map(|r| {
            let mr = curve.iter().filter(|(f, _)| *f <= r).map(|(_, m)| *m).fold(1.0, f64::min);
            mr.max(1e-10).ln()
        })
        .collect();
    Some((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

fn detections_of(r: &FrameRecord) -> Vec<(BoundingBox, f64)> {
    r.detections.iter().map(|d| (d.bbox, d.score)).collect()
}

/// Metrics of the records' final detections plus the log-average miss rate
/// obtained by sweeping the CNN probability threshold over the candidates.
pub fn evaluate_detections(records: &[FrameRecord], iou_threshold: f64) -> Metrics {
    let mut m = evaluate_frames(records.iter().map(|r| (r.ground_truth.as_slice(), detections_of(r))), iou_threshold);
    if records.iter().any(|r| r.candidates.iter().any(|c| c.probability.is_some())) {
        m.log_average_miss_rate = log_average_miss_rate(
            records.iter().map(|r| {
                let c = r.candidates.iter().filter_map(|c| c.probability.map(|p| (c.bbox, p))).collect();
                (r.ground_truth.as_slice(), c)
            }),
            iou_threshold,
        );
    }
    m
}

/// Metrics of the channel-feature stage alone: every candidate above the
/// score threshold counts as a detection.
pub fn evaluate_proposals(records: &[FrameRecord], score_threshold: f64, iou_threshold: f64) -> Metrics {
    evaluate_frames(
        records.iter().map(|r| {
            let c = r.candidates.iter().filter(|c| c.score >= score_threshold).map(|c| (c.bbox, c.score)).collect();
            (r.ground_truth.as_slice(), c)
        }),
        iou_threshold,
    )
}
