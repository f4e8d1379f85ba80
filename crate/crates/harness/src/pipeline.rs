//! Frame-by-frame replay of a scenario through the full stack:
//! render → detect → project → track → cost field → replan → move robot.

use std::time::Instant;

use nalgebra::Vector2;
use pednav_core::acf::{BoundingBox, TreeEnsemble};
use pednav_core::cascade::{detect_pedestrians, CascadeConfig, Detection, StageTiming};
use pednav_core::cnn::CnnModel;
use pednav_core::geometry::{foot_point, project_to_floor, WorldPoint};
use pednav_core::planner::{HanConfig, Path, PersonState, ReplanConfig, Replanner};
use pednav_core::tracker::{TrackStatus, Tracker, TrackerConfig};
use serde::{Deserialize, Serialize};

use crate::render::{render_frame, GroundTruth};
use crate::script::ScenarioScript;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cascade: CascadeConfig,
    /// Refine proposals with the CNN when a model is available.
    pub use_cnn: bool,
    pub tracker: TrackerConfig,
    pub han: HanConfig,
    pub replan: ReplanConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cascade: CascadeConfig::default(),
            use_cnn: true,
            tracker: TrackerConfig::default(),
            han: HanConfig::default(),
            replan: ReplanConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Scale sampling matched to [`crate::training::TrainingConfig::desk`].
    pub fn desk() -> Self {
        Self {
            cascade: CascadeConfig {
                scales_per_octave: 16,
                ..CascadeConfig::default()
            },
            ..Self::default()
        }
    }
}

pub struct Models {
    pub acf: TreeEnsemble,
    pub cnn: Option<CnnModel>,
}

/// A post-NMS proposal and, when it reached the CNN, its pedestrian probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub score: f64,
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: u64,
    pub position: WorldPoint,
    pub velocity: (f64, f64),
    pub status: TrackStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub ground_truth: Vec<GroundTruth>,
    pub candidates: Vec<Candidate>,
    pub detections: Vec<Detection>,
    pub cnn_invocations: usize,
    /// Floor positions of the detections that projected inside the world.
    pub floor_points: Vec<WorldPoint>,
    /// Confirmed tracks after this frame's update.
    pub tracks: Vec<TrackSnapshot>,
    /// Path emitted this frame; `None` when the goal is unreachable.
    pub planned_path: Option<Vec<WorldPoint>>,
    pub path_cost: Option<f64>,
    pub replanned: bool,
    pub replan_triggers: Vec<u64>,
    /// Robot position when the frame was captured.
    pub robot: WorldPoint,
    pub timing: StageTiming,
}

impl FrameRecord {
    /// The record with timing zeroed, for comparing runs.
    pub fn without_timing(&self) -> FrameRecord {
        FrameRecord {
            timing: StageTiming::default(),
            ..self.clone()
        }
    }
}

/// Moves `robot` along the path's waypoints by up to `budget` metres without
/// leaving waypoints, returning the new position and the unused budget.
pub fn advance_along(path: &Path, robot: WorldPoint, mut budget: f64) -> (WorldPoint, f64) {
    let mut at = robot;
    for w in path.waypoints.iter().skip(1) {
        let d = at.distance(w);
        if d > budget {
            return (at, budget);
        }
        budget -= d;
        at = *w;
    }
    (at, 0.0)
}

/// Detections whose foot points land on the floor inside the world.
fn project_detections(dets: &[Detection], h: &pednav_core::geometry::Homography, script: &ScenarioScript) -> Vec<WorldPoint> {
    let mut out = Vec::new();
    for d in dets {
        match project_to_floor(foot_point(&d.bbox), h) {
            Ok(p) if script.world.contains(p) => out.push(p),
            Ok(p) => log::debug!("detection at floor ({:.2}, {:.2}) lies outside the world; dropped", p.x, p.y),
            Err(e) => log::info!("dropping detection: {e}"),
        }
    }
    out
}

pub fn run_pipeline(script: &ScenarioScript, models: &Models, cfg: &PipelineConfig) -> Result<Vec<FrameRecord>> {
    script.validate()?;
    let homography = script.homography()?;
    let grid = script.grid()?;
    let cnn = if cfg.use_cnn { models.cnn.as_ref() } else { None };
    let mut tracker = Tracker::new(cfg.tracker.clone());
    let mut planner = Replanner::new(cfg.replan.clone(), cfg.han.clone());
    let mut robot = script.robot.start;
    let mut budget = 0.0;
    let dt = script.dt();
    let mut records = Vec::with_capacity(script.frames);

    for frame in 0..script.frames {
        let mut step = || -> Result<(FrameRecord, Option<Path>)> {
            let rendered = render_frame(script, frame)?;
            let start = Instant::now();
            let out = detect_pedestrians(&rendered.image, &models.acf, cnn, &cfg.cascade)?;
            let floor_points = project_detections(&out.detections, &homography, script);
            let measurements: Vec<Vector2<f64>> = floor_points.iter().map(|p| Vector2::new(p.x, p.y)).collect();
            let confirmed = tracker.step(&measurements, dt)?;
            let people: Vec<(u64, PersonState)> = confirmed
                .iter()
                .map(|t| {
                    let (p, v) = (t.state.position(), t.state.velocity());
                    (t.id, PersonState::new(WorldPoint::new(p.x, p.y), (v.x, v.y), cfg.han.moving_threshold))
                })
                .collect();
            let outcome = planner.step(&grid, &people, robot, script.robot.goal)?;
            let total = start.elapsed().as_secs_f64();

            let mut probs = out.cnn_probabilities.iter();
            let candidates = out
                .proposals
                .iter()
                .map(|p| {
                    let probability = if p.score >= cfg.cascade.score_threshold && cnn.is_some() {
                        probs.next().map(|(_, pr)| *pr)
                    } else {
                        None
                    };
                    Candidate {
                        bbox: p.bbox,
                        score: p.score,
                        probability,
                    }
                })
                .collect();
            let path = outcome.plan.path().cloned();
            let record = FrameRecord {
                frame,
                ground_truth: rendered.truth,
                candidates,
                detections: out.detections,
                cnn_invocations: out.cnn_invocations,
                floor_points,
                tracks: confirmed
                    .iter()
                    .map(|t| TrackSnapshot {
                        id: t.id,
                        position: WorldPoint::new(t.state.mean[0], t.state.mean[1]),
                        velocity: (t.state.mean[2], t.state.mean[3]),
                        status: t.status,
                    })
                    .collect(),
                planned_path: path.as_ref().map(|p| p.waypoints.clone()),
                path_cost: path.as_ref().map(|p| p.cost),
                replanned: outcome.replanned,
                replan_triggers: outcome.triggers,
                robot,
                timing: StageTiming::from_times(out.timing.acf_time, out.timing.cnn_time, total),
            };
            Ok((record, path))
        };
        let (record, path) = step().map_err(|e: Error| e.at_frame(frame))?;
        if let Some(path) = path {
            (robot, budget) = advance_along(&path, robot, budget + script.robot.speed * dt);
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn robot_stops_on_waypoints_and_keeps_leftover_budget() {
        let path = Path {
            waypoints: vec![WorldPoint::new(0.0, 0.0), WorldPoint::new(0.1, 0.0), WorldPoint::new(0.2, 0.0)],
            cells: vec![(0, 0), (1, 0), (2, 0)],
            cost: 0.2,
        };
        let (p, left) = advance_along(&path, WorldPoint::new(0.0, 0.0), 0.15);
        assert_eq!(p, WorldPoint::new(0.1, 0.0));
        assert!((left - 0.05).abs() < 1e-12);
        let (p, left) = advance_along(&path, WorldPoint::new(0.0, 0.0), 5.0);
        assert_eq!(p, WorldPoint::new(0.2, 0.0));
        assert_eq!(left, 0.0);
    }
}
