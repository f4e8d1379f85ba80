use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::kalman::{innovation, mahalanobis, KalmanState};

/// Result of associating detections with tracks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    /// Detection index assigned to each track, by track position.
    pub track_to_detection: Vec<Option<usize>>,
    /// Detections not assigned to any track, ascending.
    pub unassigned: Vec<usize>,
}

impl Assignment {
    fn from_pairs(n_tracks: usize, n_dets: usize, pairs: &[(usize, usize)]) -> Self {
        let mut track_to_detection = vec![None; n_tracks];
        let mut used = vec![false; n_dets];
        for &(t, d) in pairs {
            track_to_detection[t] = Some(d);
            used[d] = true;
        }
        Self {
            track_to_detection,
            unassigned: (0..n_dets).filter(|d| !used[*d]).collect(),
        }
    }
}

/// Mahalanobis distances for every (track, detection) pair inside the gate.
fn gated_pairs(tracks: &[KalmanState], dets: &[Vector2<f64>], meas_noise: &Matrix2<f64>, gate: f64) -> Vec<(f64, usize, usize)> {
    let mut pairs = Vec::new();
    for (t, s) in tracks.iter().enumerate() {
        for (d, z) in dets.iter().enumerate() {
            if let Some(dist) = mahalanobis(s, z, meas_noise) {
                if dist <= gate {
                    pairs.push((dist, t, d));
                }
            }
        }
    }
    pairs
}

/// Greedy global nearest neighbour: repeatedly takes the closest gated
/// (track, detection) pair among those still free. Ties resolve to the lower
/// track index, then the lower detection index.
pub fn associate_nn(tracks: &[KalmanState], dets: &[Vector2<f64>], meas_noise: &Matrix2<f64>, gate: f64) -> Assignment {
    let mut pairs = gated_pairs(tracks, dets, meas_noise, gate);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; dets.len()];
    let mut chosen = Vec::new();
    for (_, t, d) in pairs {
        if !track_used[t] && !det_used[d] {
            track_used[t] = true;
            det_used[d] = true;
            chosen.push((t, d));
        }
    }
    Assignment::from_pairs(tracks.len(), dets.len(), &chosen)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JpdaConfig {
    pub detection_probability: f64,
    /// Expected clutter detections per square metre.
    pub clutter_density: f64,
    /// Minimum association probability for a track to take a detection.
    pub probability_floor: f64,
    /// Joint events enumerated before falling back to nearest neighbour.
    pub max_events: usize,
}

impl Default for JpdaConfig {
    fn default() -> Self {
        Self {
            detection_probability: 0.9,
            clutter_density: 0.05,
            probability_floor: 0.05,
            max_events: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JpdaOutcome {
    pub assignment: Assignment,
    /// `probabilities[t][d]`: marginal probability that track `t` generated
    /// detection `d`; the last column is the probability that it was missed.
    pub probabilities: Vec<Vec<f64>>,
    pub events: usize,
    pub fell_back: bool,
}

/// Joint-probabilistic association in nearest-neighbour form.
///
/// Feasible joint events give each track at most one gated detection and
/// each detection at most one track. An event's weight is the product over
/// assigned pairs of `P_D · N(z; ẑ, S) / λ` and over missed tracks of
/// `1 − P_D · P_G`, with `P_G = 1 − exp(−gate²/2)`. Tracks then take their
/// most probable detections greedily, highest probability first.
pub fn associate_nnjpda(tracks: &[KalmanState], dets: &[Vector2<f64>], meas_noise: &Matrix2<f64>, gate: f64, cfg: &JpdaConfig) -> JpdaOutcome {
    let nt = tracks.len();
    let nd = dets.len();
    let pd = cfg.detection_probability;
    let pg = 1.0 - (-gate * gate / 2.0).exp();
    let miss = 1.0 - pd * pg;

    // candidates[t] = (detection, likelihood ratio)
    let mut candidates: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nt];
    for (_, t, d) in gated_pairs(tracks, dets, meas_noise, gate) {
        let (y, s) = innovation(&tracks[t], &dets[d], meas_noise);
        let Some(s_inv) = s.try_inverse() else { continue };
        let m2 = (y.transpose() * s_inv * y)[0];
        let density = (-0.5 * m2).exp() / (2.0 * std::f64::consts::PI * s.determinant().sqrt());
        candidates[t].push((d, pd * density / cfg.clutter_density));
    }

    let mut weights = vec![vec![0.0; nd + 1]; nt];
    let mut total = 0.0;
    let mut events = 0usize;
    let mut choice: Vec<Option<usize>> = vec![None; nt];
    let mut det_used = vec![false; nd];

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        t: usize,
        weight: f64,
        candidates: &[Vec<(usize, f64)>],
        miss: f64,
        choice: &mut Vec<Option<usize>>,
        det_used: &mut Vec<bool>,
        weights: &mut [Vec<f64>],
        total: &mut f64,
        events: &mut usize,
        cap: usize,
    ) -> bool {
        if t == candidates.len() {
            *events += 1;
            if *events > cap {
                return false;
            }
            *total += weight;
            let nd = det_used.len();
            for (tt, c) in choice.iter().enumerate() {
                weights[tt][c.unwrap_or(nd)] += weight;
            }
            return true;
        }
        choice[t] = None;
        if !enumerate(t + 1, weight * miss, candidates, miss, choice, det_used, weights, total, events, cap) {
            return false;
        }
        for &(d, ratio) in &candidates[t] {
            if det_used[d] {
                continue;
            }
            det_used[d] = true;
            choice[t] = Some(d);
            let ok = enumerate(t + 1, weight * ratio, candidates, miss, choice, det_used, weights, total, events, cap);
            det_used[d] = false;
            choice[t] = None;
            if !ok {
                return false;
            }
        }
        true
    }

    let complete = enumerate(
        0,
        1.0,
        &candidates,
        miss,
        &mut choice,
        &mut det_used,
        &mut weights,
        &mut total,
        &mut events,
        cfg.max_events,
    );
    if !complete {
        log::warn!("joint association exceeded {} events; falling back to nearest neighbour", cfg.max_events);
        return JpdaOutcome {
            assignment: associate_nn(tracks, dets, meas_noise, gate),
            probabilities: Vec::new(),
            events,
            fell_back: true,
        };
    }
    for row in &mut weights {
        row.iter_mut().for_each(|w| *w /= total);
    }

    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (t, row) in weights.iter().enumerate() {
        for (d, p) in row[..nd].iter().enumerate() {
            if *p > cfg.probability_floor {
                ranked.push((*p, t, d));
            }
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut track_used = vec![false; nt];
    let mut used = vec![false; nd];
    let mut chosen = Vec::new();
    for (_, t, d) in ranked {
        if !track_used[t] && !used[d] {
            track_used[t] = true;
            used[d] = true;
            chosen.push((t, d));
        }
    }
    JpdaOutcome {
        assignment: Assignment::from_pairs(nt, nd, &chosen),
        probabilities: weights,
        events,
        fell_back: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track(x: f64, y: f64, var: f64) -> KalmanState {
        KalmanState {
            mean: Vector4::new(x, y, 0.0, 0.0),
            covariance: Matrix4::identity() * var,
        }
    }

    fn r() -> Matrix2<f64> {
        Matrix2::identity() * 0.01
    }

    #[test]
    fn nearest_detection_wins_and_far_one_stays_free() {
        let a = associate_nn(&[track(0.0, 0.0, 0.09)], &[Vector2::new(0.1, 0.0), Vector2::new(5.0, 5.0)], &r(), 3.0);
        assert_eq!(a.track_to_detection, vec![Some(0)]);
        assert_eq!(a.unassigned, vec![1]);
        let none = associate_nn(&[track(0.0, 0.0, 0.09)], &[], &r(), 3.0);
        assert_eq!(none.track_to_detection, vec![None]);
    }

    #[test]
    fn greedy_matches_repeated_minimum_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let tracks: Vec<KalmanState> = (0..5).map(|_| track(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0), 0.2)).collect();
            let dets: Vec<Vector2<f64>> = (0..5).map(|_| Vector2::new(rng.random_range(0.0..3.0), rng.random_range(0.0..3.0))).collect();
            let gate = 2.5;
            let a = associate_nn(&tracks, &dets, &r(), gate);

            let mut free_t: Vec<usize> = (0..5).collect();
            let mut free_d: Vec<usize> = (0..5).collect();
            let mut oracle = vec![None; 5];
            loop {
                let mut best: Option<(f64, usize, usize)> = None;
                for &t in &free_t {
                    for &d in &free_d {
                        let dist = mahalanobis(&tracks[t], &dets[d], &r()).unwrap();
                        if dist <= gate && best.is_none_or(|b| dist < b.0) {
                            best = Some((dist, t, d));
                        }
                    }
                }
                let Some((_, t, d)) = best else { break };
                oracle[t] = Some(d);
                free_t.retain(|x| *x != t);
                free_d.retain(|x| *x != d);
            }
            let total = |assign: &[Option<usize>]| -> f64 {
                assign
                    .iter()
                    .enumerate()
                    .filter_map(|(t, d)| d.map(|d| mahalanobis(&tracks[t], &dets[d], &r()).unwrap()))
                    .sum()
            };
            assert_eq!(a.track_to_detection, oracle);
            assert_eq!(total(&a.track_to_detection), total(&oracle));
        }
    }

    #[test]
    fn jpda_agrees_with_nn_when_unambiguous() {
        let tracks = [track(0.0, 0.0, 0.05), track(10.0, 0.0, 0.05)];
        let dets = [Vector2::new(10.1, 0.05), Vector2::new(0.05, -0.1)];
        let j = associate_nnjpda(&tracks, &dets, &r(), 3.0, &JpdaConfig::default());
        assert_eq!(j.assignment, associate_nn(&tracks, &dets, &r(), 3.0));
        let single = associate_nnjpda(&tracks[..1], &dets[1..], &r(), 3.0, &JpdaConfig::default());
        assert_eq!(single.assignment, associate_nn(&tracks[..1], &dets[1..], &r(), 3.0));
    }

    #[test]
    fn event_cap_falls_back_to_nn() {
        let tracks: Vec<KalmanState> = (0..4).map(|i| track(i as f64 * 0.1, 0.0, 1.0)).collect();
        let dets: Vec<Vector2<f64>> = (0..4).map(|i| Vector2::new(i as f64 * 0.1, 0.05)).collect();
        let cfg = JpdaConfig {
            max_events: 10,
            ..JpdaConfig::default()
        };
        let j = associate_nnjpda(&tracks, &dets, &r(), 3.0, &cfg);
        assert!(j.fell_back);
        assert_eq!(j.assignment, associate_nn(&tracks, &dets, &r(), 3.0));
    }
}
