//! Stage timing comparison between the unfiltered cascade and the cascade
//! with a calibrated proposal-score threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::{match_frame, Outcome};
use crate::pipeline::FrameRecord;
use crate::{Error, Result};

/// Fewest frames a timing row may be computed from.
pub const MIN_BENCH_FRAMES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub label: String,
    pub frames: usize,
    pub acf_time: Stat,
    pub cnn_time: Stat,
    pub total_time: Stat,
    /// Reciprocal of the mean total time.
    pub fps: f64,
    pub cnn_invocations: Stat,
}

impl BenchRow {
    pub fn from_records(label: &str, records: &[FrameRecord]) -> Result<BenchRow> {
        if records.len() < MIN_BENCH_FRAMES {
            return Err(Error::Data(format!("timing needs at least {MIN_BENCH_FRAMES} frames, got {}", records.len())));
        }
        let col = |f: fn(&FrameRecord) -> f64| Stat::of(&records.iter().map(f).collect::<Vec<_>>());
        let total_time = col(|r| r.timing.total_time);
        Ok(BenchRow {
            label: label.into(),
            frames: records.len(),
            acf_time: col(|r| r.timing.acf_time),
            cnn_time: col(|r| r.timing.cnn_time),
            total_time,
            fps: if total_time.mean > 0.0 { 1.0 / total_time.mean } else { f64::INFINITY },
            cnn_invocations: col(|r| r.cnn_invocations as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub score_threshold: f64,
    pub baseline: BenchRow,
    pub thresholded: BenchRow,
}

impl BenchReport {
    pub fn new(score_threshold: f64, baseline: &[FrameRecord], thresholded: &[FrameRecord]) -> Result<BenchReport> {
        Ok(BenchReport {
            score_threshold,
            baseline: BenchRow::from_records("baseline", baseline)?,
            thresholded: BenchRow::from_records("thresholded", thresholded)?,
        })
    }

    /// The threshold cut both CNN invocations and CNN time on average.
    pub fn speedup_holds(&self) -> bool {
        self.thresholded.cnn_invocations.mean < self.baseline.cnn_invocations.mean && self.thresholded.cnn_time.mean < self.baseline.cnn_time.mean
    }

    /// Two-row table with mean ± std per stage, times in milliseconds.
    pub fn to_table(&self) -> String {
        let head = ["", "ACF ms", "CNN ms", "total ms", "FPS", "CNN calls"];
        let cell = |s: Stat, k: f64| format!("{:.2} ± {:.2}", s.mean * k, s.std * k);
        let rows: Vec<[String; 6]> = [&self.baseline, &self.thresholded]
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    cell(r.acf_time, 1e3),
                    cell(r.cnn_time, 1e3),
                    cell(r.total_time, 1e3),
                    format!("{:.1}", r.fps),
                    cell(r.cnn_invocations, 1.0),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..6)
            .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([head[c].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, cells: Vec<&str>| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}", w = *w)).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, head.to_vec());
        for r in &rows {
            line(&mut out, r.iter().map(String::as_str).collect());
        }
        let _ = writeln!(out, "score threshold: {}", self.score_threshold);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Mean of `a - b` with a normal-approximation 95% confidence interval.
pub fn paired_difference_ci(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Data("paired samples need equal lengths of at least two".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Stat::of(&d);
    let half = 1.96 * s.std / (d.len() as f64).sqrt();
    Ok((s.mean, s.mean - half, s.mean + half))
}

/// Every detection of `subset` appears, with the same box and score, among
/// the detections of the same frame in `superset`.
pub fn detections_subset(subset: &[FrameRecord], superset: &[FrameRecord]) -> bool {
    subset.len() == superset.len()
        && subset
            .iter()
            .zip(superset)
            .all(|(a, b)| a.detections.iter().all(|d| b.detections.iter().any(|e| e.bbox == d.bbox && e.score == d.score)))
}

/// Proposal scores of the candidates that match usable ground truth, ranked
/// by proposal score.
pub fn true_positive_scores(records: &[FrameRecord], iou_threshold: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for r in records {
        let c: Vec<_> = r.candidates.iter().map(|c| (c.bbox, c.score)).collect();
        for (o, (_, s)) in match_frame(&r.ground_truth, &c, iou_threshold).into_iter().zip(&c) {
            if matches!(o, Outcome::TruePositive(_)) {
                out.push(*s);
            }
        }
    }
    out
}
