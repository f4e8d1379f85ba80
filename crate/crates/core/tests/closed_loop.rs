//! Box measurements → floor projection → tracking → replanning, with a
//! scripted walker ahead of the robot.

use nalgebra::{Matrix3, Vector2};
use pednav_core::acf::BoundingBox;
use pednav_core::geometry::{foot_point, project_to_floor, Homography, WorldPoint};
use pednav_core::planner::{HanConfig, OccupancyGrid, PersonState, ReplanConfig, Replanner};
use pednav_core::tracker::{Tracker, TrackerConfig};

fn floor_to_image() -> Homography {
    Homography::new(Matrix3::new(40.0, 0.0, 0.0, 0.0, -15.0, 200.0, 0.0, 0.02, 1.0)).unwrap()
}

fn box_for(p: WorldPoint, to_image: &Homography) -> BoundingBox {
    let (u, v) = to_image.apply(p.x, p.y).unwrap();
    BoundingBox::new(u - 15.0, v - 90.0, 30.0, 90.0).unwrap()
}

fn step_along(path: &[WorldPoint], from: WorldPoint, mut budget: f64) -> WorldPoint {
    let mut at = from;
    for w in path.iter().skip(1) {
        let d = at.distance(w);
        if d > budget {
            let k = budget / d;
            return WorldPoint::new(at.x + k * (w.x - at.x), at.y + k * (w.y - at.y));
        }
        budget -= d;
        at = *w;
    }
    at
}

struct Run {
    robot: Vec<WorldPoint>,
    walker: Vec<WorldPoint>,
    confirmed_ids: Vec<u64>,
}

fn run(frames: usize) -> Run {
    let to_image = floor_to_image();
    let to_floor = to_image.inverse();
    let grid = OccupancyGrid::new(80, 60, 0.1, WorldPoint::new(0.0, 0.0)).unwrap();
    let han = HanConfig::default();
    let mut tracker = Tracker::new(TrackerConfig::default());
    let mut planner = Replanner::new(ReplanConfig::default(), han.clone());
    let (dt, speed) = (0.1, 0.6);
    let goal = WorldPoint::new(7.5, 3.0);
    let mut robot = WorldPoint::new(0.5, 3.0);
    let mut out = Run {
        robot: Vec::new(),
        walker: Vec::new(),
        confirmed_ids: Vec::new(),
    };
    for k in 0..frames {
        let t = k as f64 * dt;
        let walker = WorldPoint::new(2.5 + 0.25 * t, 3.0);
        let b = box_for(walker, &to_image);
        let seen = project_to_floor(foot_point(&b), &to_floor).unwrap();
        let tracks = tracker.step(&[Vector2::new(seen.x, seen.y)], dt).unwrap();
        let people: Vec<(u64, PersonState)> = tracks
            .iter()
            .map(|tr| {
                let (p, v) = (tr.state.position(), tr.state.velocity());
                (tr.id, PersonState::new(WorldPoint::new(p.x, p.y), (v.x, v.y), han.moving_threshold))
            })
            .collect();
        for (id, _) in &people {
            if !out.confirmed_ids.contains(id) {
                out.confirmed_ids.push(*id);
            }
        }
        let outcome = planner.step(&grid, &people, robot, goal).unwrap();
        out.robot.push(robot);
        out.walker.push(walker);
        if let Some(path) = outcome.plan.path() {
            robot = step_along(&path.waypoints, robot, speed * dt);
        }
    }
    out
}

#[test]
fn projected_foot_points_recover_floor_positions() {
    let to_image = floor_to_image();
    let to_floor = to_image.inverse();
    for p in [WorldPoint::new(1.0, 1.0), WorldPoint::new(6.5, 4.2), WorldPoint::new(3.3, 0.4)] {
        let q = project_to_floor(foot_point(&box_for(p, &to_image)), &to_floor).unwrap();
        assert!(q.distance(&p) < 1e-9, "{p:?} → {q:?}");
    }
}

#[test]
fn robot_overtakes_the_walker_on_their_left() {
    let r = run(160);
    assert_eq!(r.confirmed_ids, vec![1], "one walker, one track");
    let mut beside = 0;
    for (robot, walker) in r.robot.iter().zip(&r.walker) {
        if (robot.x - walker.x).abs() <= 0.5 {
            beside += 1;
            assert!(robot.y > walker.y + 0.3, "robot at {robot:?} beside walker at {walker:?}");
        }
    }
    assert!(beside > 0, "the robot never drew level with the walker");
    let (robot, walker) = (r.robot.last().unwrap(), r.walker.last().unwrap());
    assert!(robot.x > walker.x + 1.0);
}

#[test]
fn closed_loop_is_deterministic() {
    let (a, b) = (run(60), run(60));
    assert_eq!(a.robot, b.robot);
    assert_eq!(a.confirmed_ids, b.confirmed_ids);
}
