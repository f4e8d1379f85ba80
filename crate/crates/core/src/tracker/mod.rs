//! Multi-pedestrian tracking on the floor plane with constant-velocity Kalman
//! filters, nearest-neighbour or NNJPDA association and a
//! tentative → confirmed → deleted track lifecycle.

mod association;
mod kalman;

use std::fmt;
use std::io::Write;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::Result;

pub use association::{associate_nn, associate_nnjpda, Assignment, JpdaConfig, JpdaOutcome};
pub use kalman::{innovation, mahalanobis, predict, process_noise_matrix, update, KalmanState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

impl fmt::Display for TrackStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackStatus::Tentative => "tentative",
            TrackStatus::Confirmed => "confirmed",
            TrackStatus::Deleted => "deleted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    pub frames_since_update: usize,
    /// Consecutive frames with an associated detection.
    pub hit_count: usize,
    pub status: TrackStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationMethod {
    NearestNeighbor,
    Nnjpda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// White-acceleration intensity, (m/s²)².
    pub process_noise: f64,
    /// Isotropic measurement standard deviation, metres.
    pub measurement_noise: f64,
    /// Velocity standard deviation given to new tracks, m/s.
    pub initial_velocity_std: f64,
    /// Mahalanobis gate radius.
    pub gate: f64,
    pub confirm_frames: usize,
    pub max_misses: usize,
    pub method: AssociationMethod,
    pub jpda: JpdaConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.5,
            measurement_noise: 0.1,
            initial_velocity_std: 2.0,
            gate: 3.0,
            confirm_frames: 3,
            max_misses: 15,
            method: AssociationMethod::Nnjpda,
            jpda: JpdaConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    /// Live (tentative and confirmed) tracks.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    fn meas_noise(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.config.measurement_noise.powi(2)
    }

    /// Advances one frame: predict, associate, update, manage lifecycles.
    /// Returns the confirmed tracks after the step.
    pub fn step(&mut self, detections: &[Vector2<f64>], dt: f64) -> Result<Vec<Track>> {
        let cfg = self.config.clone();
        let r = self.meas_noise();
        for t in &mut self.tracks {
            t.state = predict(&t.state, dt, cfg.process_noise);
        }
        let states: Vec<KalmanState> = self.tracks.iter().map(|t| t.state).collect();
        let assignment = match cfg.method {
            AssociationMethod::NearestNeighbor => associate_nn(&states, detections, &r, cfg.gate),
            AssociationMethod::Nnjpda => associate_nnjpda(&states, detections, &r, cfg.gate, &cfg.jpda).assignment,
        };
        for (t, det) in self.tracks.iter_mut().zip(&assignment.track_to_detection) {
            match det {
                Some(d) => {
                    t.state = update(&t.state, &detections[*d], &r)?;
                    t.frames_since_update = 0;
                    t.hit_count += 1;
                    if t.status == TrackStatus::Tentative && t.hit_count >= cfg.confirm_frames {
                        t.status = TrackStatus::Confirmed;
                    }
                }
                None => {
                    t.frames_since_update += 1;
                    t.hit_count = 0;
                    if t.status == TrackStatus::Tentative || t.frames_since_update > cfg.max_misses {
                        t.status = TrackStatus::Deleted;
                    }
                }
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);
        for &d in &assignment.unassigned {
            let status = if cfg.confirm_frames <= 1 { TrackStatus::Confirmed } else { TrackStatus::Tentative };
            self.tracks.push(Track {
                id: self.next_id,
                state: KalmanState::at_rest(detections[d], cfg.measurement_noise, cfg.initial_velocity_std),
                frames_since_update: 0,
                hit_count: 1,
                status,
            });
            self.next_id += 1;
        }
        Ok(self.confirmed())
    }

    pub fn confirmed(&self) -> Vec<Track> {
        self.tracks.iter().filter(|t| t.status == TrackStatus::Confirmed).cloned().collect()
    }
}

/// Writes one `frameId trackId px py vx vy status` line per track.
pub fn write_track_log(w: &mut impl Write, frame: usize, tracks: &[Track]) -> Result<()> {
    for t in tracks {
        let m = &t.state.mean;
        writeln!(w, "{frame} {} {:.6} {:.6} {:.6} {:.6} {}", t.id, m[0], m[1], m[2], m[3], t.status)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn straight_walker_velocity_converges() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        let dt = 0.1;
        let mut confirmed = Vec::new();
        for k in 0..20 {
            let p = Vector2::new(1.0 + 1.2 * dt * k as f64, 2.0);
            confirmed = tracker.step(&[p], dt).unwrap();
        }
        assert_eq!(confirmed.len(), 1);
        let v = confirmed[0].state.velocity();
        assert!((v - Vector2::new(1.2, 0.0)).norm() < 0.1, "{v:?}");
    }

    #[test]
    fn lifecycle_confirms_then_deletes() {
        let cfg = TrackerConfig::default();
        let mut tracker = Tracker::new(cfg.clone());
        let p = Vector2::new(0.0, 0.0);
        assert!(tracker.step(&[p], 0.1).unwrap().is_empty());
        assert!(tracker.step(&[p], 0.1).unwrap().is_empty());
        assert_eq!(tracker.step(&[p], 0.1).unwrap().len(), 1);
        for _ in 0..cfg.max_misses {
            assert_eq!(tracker.step(&[], 0.1).unwrap().len(), 1);
        }
        assert!(tracker.step(&[], 0.1).unwrap().is_empty());
        assert!(tracker.tracks().is_empty());
    }

    #[test]
    fn tentative_track_dies_on_first_miss_and_ids_increase() {
        let mut tracker = Tracker::new(TrackerConfig::default());
        tracker.step(&[Vector2::new(0.0, 0.0)], 0.1).unwrap();
        tracker.step(&[], 0.1).unwrap();
        assert!(tracker.tracks().is_empty());
        tracker.step(&[Vector2::new(0.0, 0.0)], 0.1).unwrap();
        assert_eq!(tracker.tracks()[0].id, 2);
    }

    #[test]
    fn crossing_pedestrians_keep_identities() {
        let mut good = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.05).unwrap();
            let mut tracker = Tracker::new(TrackerConfig::default());
            let dt = 0.1;
            let walkers = |k: usize| {
                let t = k as f64 * dt;
                [Vector2::new(-3.0 + 1.0 * t, 0.0 + 0.3 * t), Vector2::new(3.0 - 1.0 * t, 1.8 - 0.3 * t)]
            };
            let mut ids = None;
            let mut ok = true;
            for k in 0..60 {
                let truth = walkers(k);
                let dets: Vec<Vector2<f64>> = truth.iter().map(|p| p + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))).collect();
                let conf = tracker.step(&dets, dt).unwrap();
                if k == 10 {
                    // ids of the tracks nearest each walker before the crossing
                    let find = |p: &Vector2<f64>| conf.iter().min_by(|a, b| (a.state.position() - p).norm().total_cmp(&(b.state.position() - p).norm())).map(|t| t.id);
                    ids = Some([find(&truth[0]), find(&truth[1])]);
                }
            }
            let final_tracks = tracker.confirmed();
            let truth = walkers(59);
            if let Some([Some(a), Some(b)]) = ids {
                for (id, p) in [(a, truth[0]), (b, truth[1])] {
                    match final_tracks.iter().find(|t| t.id == id) {
                        Some(t) if (t.state.position() - p).norm() < 0.5 => {}
                        _ => ok = false,
                    }
                }
            } else {
                ok = false;
            }
            good += ok as usize;
        }
        assert!(good >= 90, "{good} / 100");
    }

    #[test]
    fn track_log_lines() {
        let mut tracker = Tracker::new(TrackerConfig {
            confirm_frames: 1,
            ..TrackerConfig::default()
        });
        let tracks = tracker.step(&[Vector2::new(1.0, 2.0)], 0.1).unwrap();
        let mut buf = Vec::new();
        write_track_log(&mut buf, 4, &tracks).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "4 1 1.000000 2.000000 0.000000 0.000000 confirmed\n");
    }
}
