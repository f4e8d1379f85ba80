//! Built-in scenarios: the empty room, standing people in front of the robot,
//! a walker the robot has to overtake, and random planted scenes for training
//! and evaluation.

use pednav_core::geometry::WorldPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::render::mix;
use crate::script::{default_camera, ClutterItem, ClutterKind, PersonScript, RobotScript, ScenarioScript, Waypoint, WorldBounds};

fn base(name: &str, frames: usize, seed: u64) -> ScenarioScript {
    ScenarioScript {
        name: name.into(),
        frames,
        frame_rate: 10.0,
        seed,
        image_size: (320, 240),
        camera: default_camera(),
        correspondences: Vec::new(),
        world: WorldBounds {
            width: 8.0,
            height: 6.0,
            resolution: 0.1,
        },
        obstacles: Vec::new(),
        robot: RobotScript {
            start: WorldPoint::new(0.5, 3.2),
            goal: WorldPoint::new(7.5, 3.2),
            speed: 0.6,
        },
        clutter: Vec::new(),
        people: Vec::new(),
    }
}

fn room_clutter() -> Vec<ClutterItem> {
    vec![
        ClutterItem {
            kind: ClutterKind::Plant,
            position: WorldPoint::new(1.3, 5.3),
        },
        ClutterItem {
            kind: ClutterKind::Bin,
            position: WorldPoint::new(6.9, 5.2),
        },
        ClutterItem {
            kind: ClutterKind::Crate,
            position: WorldPoint::new(6.6, 1.3),
        },
    ]
}

/// No people; the robot should drive straight to its goal.
pub fn empty(frames: usize) -> ScenarioScript {
    let mut s = base("empty", frames, 11);
    s.clutter = room_clutter();
    s
}

/// People standing in front of the robot along its route.
pub fn standing() -> ScenarioScript {
    let mut s = base("standing", 150, 21);
    s.clutter = room_clutter();
    s.people = vec![
        PersonScript::standing(1, 4, WorldPoint::new(3.0, 3.3)),
        PersonScript {
            height: 1.78,
            ..PersonScript::standing(2, 9, WorldPoint::new(5.1, 2.95))
        },
        PersonScript {
            height: 1.62,
            ..PersonScript::standing(3, 2, WorldPoint::new(4.3, 4.2))
        },
    ];
    s
}

/// A person who starts walking along the robot's route while the robot is
/// already moving; the robot has to overtake them.
pub fn walker() -> ScenarioScript {
    let mut s = base("walker", 140, 31);
    s.clutter = room_clutter();
    s.people = vec![PersonScript {
        id: 1,
        sprite: 6,
        height: 1.72,
        waypoints: vec![
            Waypoint {
                t: 0.0,
                position: WorldPoint::new(3.0, 3.2),
            },
            Waypoint {
                t: 1.5,
                position: WorldPoint::new(3.0, 3.2),
            },
            Waypoint {
                t: 16.5,
                position: WorldPoint::new(6.75, 3.2),
            },
        ],
    }];
    s
}

/// Parameters of randomly planted scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedParams {
    pub frames: usize,
    pub frame_rate: f64,
    pub people: (usize, usize),
    pub clutter: (usize, usize),
    pub max_speed: f64,
}

impl Default for PlantedParams {
    fn default() -> Self {
        Self {
            frames: 4,
            frame_rate: 2.0,
            people: (1, 4),
            clutter: (2, 5),
            max_speed: 0.5,
        }
    }
}

fn fully_visible(s: &ScenarioScript, p: WorldPoint, height: f64) -> bool {
    let (w, h) = (s.image_size.0 as f64, s.image_size.1 as f64);
    s.camera
        .person(p, height)
        .is_some_and(|proj| proj.bbox.x >= 1.0 && proj.bbox.y >= 1.0 && proj.bbox.right() <= w - 1.0 && proj.bbox.bottom() <= h - 1.0)
}

/// A random scene with fully visible people and clutter props. People walk
/// in straight lines and stay apart from each other and from the props.
pub fn planted(seed: u64, params: &PlantedParams) -> ScenarioScript {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x91A7));
    let mut s = base("planted", params.frames, seed);
    s.frame_rate = params.frame_rate;
    let duration = params.frames.saturating_sub(1) as f64 / params.frame_rate;
    let n_people = rng.random_range(params.people.0..=params.people.1);
    let mut occupied: Vec<WorldPoint> = Vec::new();
    for id in 0..n_people as u64 {
        for _ in 0..200 {
            let height = rng.random_range(1.55..1.9);
            let a = WorldPoint::new(rng.random_range(1.5..6.5), rng.random_range(1.5..4.5));
            let speed = rng.random_range(0.0..=params.max_speed);
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let b = WorldPoint::new(a.x + speed * duration * dir.cos(), a.y + speed * duration * dir.sin());
            if !fully_visible(&s, a, height) || !fully_visible(&s, b, height) {
                continue;
            }
            if occupied.iter().any(|o| o.distance(&a) < 0.9 || o.distance(&b) < 0.9) {
                continue;
            }
            occupied.extend([a, b]);
            s.people.push(PersonScript {
                id: id + 1,
                sprite: rng.random_range(0..10_000),
                height,
                waypoints: vec![Waypoint { t: 0.0, position: a }, Waypoint { t: duration.max(1e-9), position: b }],
            });
            break;
        }
    }
    let n_clutter = rng.random_range(params.clutter.0..=params.clutter.1);
    for _ in 0..n_clutter {
        for _ in 0..200 {
            let p = WorldPoint::new(rng.random_range(1.0..7.0), rng.random_range(1.5..5.6));
            if occupied.iter().any(|o| o.distance(&p) < 0.8) {
                continue;
            }
            let kind = ClutterKind::ALL[rng.random_range(0..ClutterKind::ALL.len())];
            occupied.push(p);
            s.clutter.push(ClutterItem { kind, position: p });
            break;
        }
    }
    s
}
