use serde::{Deserialize, Serialize};

use super::OccupancyGrid;
use crate::geometry::WorldPoint;

/// Human-aware cost parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HanConfig {
    /// Peak cost at a person's position.
    pub amplitude: f64,
    /// Personal-space standard deviation, metres.
    pub sigma: f64,
    /// Standard deviation of the cost stretched ahead of a moving person.
    pub sigma_front: f64,
    /// Factor applied to cost on a moving person's right-hand side.
    pub right_penalty: f64,
    /// Speed (m/s) at or above which a person counts as moving.
    pub moving_threshold: f64,
}

impl Default for HanConfig {
    fn default() -> Self {
        Self {
            amplitude: 10.0,
            sigma: 0.45,
            sigma_front: 1.2,
            right_penalty: 1.5,
            moving_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonState {
    pub position: WorldPoint,
    pub velocity: (f64, f64),
    pub moving: bool,
}

impl PersonState {
    pub fn new(position: WorldPoint, velocity: (f64, f64), moving_threshold: f64) -> Self {
        Self {
            position,
            velocity,
            moving: velocity.0.hypot(velocity.1) >= moving_threshold,
        }
    }

    pub fn standing(position: WorldPoint) -> Self {
        Self {
            position,
            velocity: (0.0, 0.0),
            moving: false,
        }
    }
}

/// Cost one person induces at `at`.
///
/// Everyone gets `A·exp(−r²/2σ²)`. For a moving person with unit heading
/// `h`, writing `s` for the offset along `h` and `l` for the offset to their
/// left, the region ahead (`s > 0`) also gets `A·exp(−s²/2σ_f² − l²/2σ²)`
/// (the larger of the two terms applies), and everything on their right
/// (`l < 0`) is multiplied by the right-side penalty.
pub fn person_cost(p: &PersonState, at: WorldPoint, cfg: &HanConfig) -> f64 {
    let (dx, dy) = (at.x - p.position.x, at.y - p.position.y);
    let s2 = 2.0 * cfg.sigma * cfg.sigma;
    let mut cost = cfg.amplitude * (-(dx * dx + dy * dy) / s2).exp();
    if p.moving {
        let speed = p.velocity.0.hypot(p.velocity.1);
        let (hx, hy) = (p.velocity.0 / speed, p.velocity.1 / speed);
        let along = dx * hx + dy * hy;
        let left = hx * dy - hy * dx;
        if along > 0.0 {
            let front = cfg.amplitude * (-along * along / (2.0 * cfg.sigma_front * cfg.sigma_front) - left * left / s2).exp();
            cost = cost.max(front);
        }
        if left < 0.0 {
            cost *= cfg.right_penalty;
        }
    }
    cost
}

/// Human cost at every cell centre; people combine by per-cell maximum.
pub fn human_cost_field(grid: &OccupancyGrid, people: &[PersonState], cfg: &HanConfig) -> Vec<f64> {
    let mut field = vec![0.0; grid.len()];
    for cy in 0..grid.height {
        for cx in 0..grid.width {
            let c = grid.center(cx, cy);
            field[grid.index(cx, cy)] = people.iter().map(|p| person_cost(p, c, cfg)).fold(0.0, f64::max);
        }
    }
    field
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standing_person_is_radially_symmetric() {
        let cfg = HanConfig::default();
        let p = PersonState::standing(WorldPoint::new(1.0, 1.0));
        let r = 0.37;
        let base = person_cost(&p, WorldPoint::new(1.0 + r, 1.0), &cfg);
        for k in 0..16 {
            let a = k as f64 * std::f64::consts::PI / 8.0;
            let c = person_cost(&p, WorldPoint::new(1.0 + r * a.cos(), 1.0 + r * a.sin()), &cfg);
            assert!((c - base).abs() < 1e-9);
        }
    }

    #[test]
    fn moving_person_left_is_cheaper_than_right() {
        let cfg = HanConfig::default();
        let p = PersonState::new(WorldPoint::new(0.0, 0.0), (1.0, 0.0), cfg.moving_threshold);
        assert!(p.moving);
        for d in [-0.5, 0.0, 0.3, 1.0] {
            let left = person_cost(&p, WorldPoint::new(d, 0.2), &cfg);
            let right = person_cost(&p, WorldPoint::new(d, -0.2), &cfg);
            assert!(left < right, "d = {d}");
        }
        let ahead = person_cost(&p, WorldPoint::new(1.0, 0.0), &cfg);
        let behind = person_cost(&p, WorldPoint::new(-1.0, 0.0), &cfg);
        assert!(ahead > behind);
    }

    #[test]
    fn empty_scene_has_zero_field() {
        let g = OccupancyGrid::new(4, 3, 0.5, WorldPoint::new(0.0, 0.0)).unwrap();
        assert!(human_cost_field(&g, &[], &HanConfig::default()).iter().all(|v| *v == 0.0));
    }
}
