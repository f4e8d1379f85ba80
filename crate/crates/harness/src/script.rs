//! Scenario scripts: a line-oriented text format describing the world, the
//! camera, the robot's task and every scripted person.
//!
//! ```text
//! # comments start with '#'
//! name walker
//! frames 140                          # duration in frames
//! rate 10                             # frames per second
//! seed 7                              # texture / noise seed
//! image 320 240                       # width height
//! camera 320 160 120 4 -0.5 3.5 40    # focal u0 v0 cx cy cz pitch(deg)
//! correspondence 91.2 201.7 3 2       # u v x y; optional, >= 4 if present
//! world 8 6 0.1                       # width height resolution, metres
//! obstacle 0 0 8 0.3                  # x0 y0 x1 y1, occupied rectangle
//! robot 0.5 3.2 7.5 3.2 0.6           # start goal speed(m/s)
//! clutter pole 2.2 4.6                # kind x y
//! person 1 3 1.7                      # id sprite height(m)
//! 0 3.0 3.2                           # t(s) x y, piecewise linear
//! 16.5 6.75 3.2
//! end
//! ```
//!
//! Without correspondence lines the pipeline calibrates its homography from
//! floor points projected through the camera.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use pednav_core::geometry::{calibrate_homography, Correspondence, Homography, WorldPoint};
use pednav_core::planner::OccupancyGrid;
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: WorldPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonScript {
    pub id: u64,
    /// Appearance seed.
    pub sprite: u64,
    /// Standing height, metres.
    pub height: f64,
    /// Time-ordered; the person holds the first position before the first
    /// waypoint and the last one after the last.
    pub waypoints: Vec<Waypoint>,
}

impl PersonScript {
    pub fn standing(id: u64, sprite: u64, position: WorldPoint) -> Self {
        Self {
            id,
            sprite,
            height: 1.7,
            waypoints: vec![Waypoint { t: 0.0, position }],
        }
    }

    fn segment(&self, t: f64) -> (Waypoint, Waypoint) {
        let w = &self.waypoints;
        if t <= w[0].t || w.len() == 1 {
            return (w[0], w[0]);
        }
        for pair in w.windows(2) {
            if t <= pair[1].t {
                return (pair[0], pair[1]);
            }
        }
        let last = w[w.len() - 1];
        (last, last)
    }

    pub fn position_at(&self, t: f64) -> WorldPoint {
        let (a, b) = self.segment(t);
        if b.t <= a.t {
            return if t <= a.t { a.position } else { b.position };
        }
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        WorldPoint::new(a.position.x + f * (b.position.x - a.position.x), a.position.y + f * (b.position.y - a.position.y))
    }

    /// Velocity of the segment active at `t` (zero while holding position).
    pub fn velocity_at(&self, t: f64) -> (f64, f64) {
        let (a, b) = self.segment(t);
        if b.t <= a.t || t < a.t || t > b.t {
            return (0.0, 0.0);
        }
        let dt = b.t - a.t;
        ((b.position.x - a.position.x) / dt, (b.position.y - a.position.y) / dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClutterKind {
    Pole,
    Bin,
    Crate,
    Plant,
    CoatStand,
}

impl ClutterKind {
    pub const ALL: [ClutterKind; 5] = [ClutterKind::Pole, ClutterKind::Bin, ClutterKind::Crate, ClutterKind::Plant, ClutterKind::CoatStand];
}

impl fmt::Display for ClutterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClutterKind::Pole => "pole",
            ClutterKind::Bin => "bin",
            ClutterKind::Crate => "crate",
            ClutterKind::Plant => "plant",
            ClutterKind::CoatStand => "coat_stand",
        })
    }
}

impl FromStr for ClutterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ClutterKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown clutter kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClutterItem {
    pub kind: ClutterKind,
    pub position: WorldPoint,
}

/// Axis-aligned occupied rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub min: WorldPoint,
    pub max: WorldPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotScript {
    pub start: WorldPoint,
    pub goal: WorldPoint,
    /// Metres per second along the current path.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub width: f64,
    pub height: f64,
    pub resolution: f64,
}

impl WorldBounds {
    pub fn contains(&self, p: WorldPoint) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub frames: usize,
    pub frame_rate: f64,
    pub seed: u64,
    pub image_size: (usize, usize),
    pub camera: PinholeCamera,
    pub correspondences: Vec<Correspondence>,
    pub world: WorldBounds,
    pub obstacles: Vec<Obstacle>,
    pub robot: RobotScript,
    pub clutter: Vec<ClutterItem>,
    pub people: Vec<PersonScript>,
}

fn nums<T: FromStr>(fields: &[&str], count: usize, line: usize, what: &str) -> Result<Vec<T>> {
    if fields.len() != count {
        return Err(Error::Script {
            line,
            detail: format!("`{what}` expects {count} values, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>().map_err(|_| Error::Script {
                line,
                detail: format!("`{what}`: cannot parse `{f}`"),
            })
        })
        .collect()
}

impl ScenarioScript {
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.frames == 0 {
            return bad("duration must be at least one frame".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!("frame rate {} must be positive", self.frame_rate));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return bad("image size must be positive".into());
        }
        let w = &self.world;
        if !(w.width > 0.0 && w.height > 0.0 && w.resolution > 0.0) {
            return bad("world bounds and resolution must be positive".into());
        }
        if self.camera.focal.is_nan() || self.camera.focal <= 0.0 {
            return bad("camera focal length must be positive".into());
        }
        if !self.correspondences.is_empty() && self.correspondences.len() < 4 {
            return bad(format!("{} correspondences given; at least 4 are needed", self.correspondences.len()));
        }
        for (name, p) in [("robot start", self.robot.start), ("robot goal", self.robot.goal)] {
            if !w.contains(p) {
                return bad(format!("{name} ({}, {}) lies outside the world", p.x, p.y));
            }
        }
        if !(self.robot.speed >= 0.0 && self.robot.speed.is_finite()) {
            return bad("robot speed must be non-negative".into());
        }
        for c in &self.clutter {
            if !w.contains(c.position) {
                return bad(format!("{} at ({}, {}) lies outside the world", c.kind, c.position.x, c.position.y));
            }
        }
        for p in &self.people {
            if p.waypoints.is_empty() {
                return bad(format!("person {} has no waypoints", p.id));
            }
            if p.height.is_nan() || p.height <= 0.0 {
                return bad(format!("person {} has non-positive height", p.id));
            }
            for pair in p.waypoints.windows(2) {
                if pair[1].t < pair[0].t {
                    return bad(format!("person {}: waypoint times must not decrease", p.id));
                }
            }
            if let Some(wp) = p.waypoints.iter().find(|wp| !w.contains(wp.position)) {
                return bad(format!(
                    "person {} leaves the world at t = {} ({}, {})",
                    p.id, wp.t, wp.position.x, wp.position.y
                ));
            }
        }
        let mut ids: Vec<u64> = self.people.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("person ids must be unique".into());
        }
        Ok(())
    }

    /// Image-to-floor homography calibrated from the script's
    /// correspondences, or from a floor grid seen through the camera.
    pub fn homography(&self) -> Result<Homography> {
        let corr = if self.correspondences.is_empty() {
            self.camera.correspondences(&self.calibration_points(), self.image_size.0, self.image_size.1)
        } else {
            self.correspondences.clone()
        };
        Ok(calibrate_homography(&corr)?.homography)
    }

    fn calibration_points(&self) -> Vec<WorldPoint> {
        let mut pts = Vec::new();
        for i in 1..8 {
            for j in 1..8 {
                pts.push(WorldPoint::new(self.world.width * i as f64 / 8.0, self.world.height * j as f64 / 8.0));
            }
        }
        pts
    }

    pub fn grid(&self) -> Result<OccupancyGrid> {
        let w = &self.world;
        let cols = (w.width / w.resolution).round() as usize;
        let rows = (w.height / w.resolution).round() as usize;
        let mut grid = OccupancyGrid::new(cols, rows, w.resolution, WorldPoint::new(0.0, 0.0))?;
        for o in &self.obstacles {
            for cy in 0..rows {
                for cx in 0..cols {
                    let c = grid.center(cx, cy);
                    if c.x >= o.min.x && c.x <= o.max.x && c.y >= o.min.y && c.y <= o.max.y {
                        grid.set_occupied(cx, cy, true);
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = ScenarioScript::empty_template();
        let mut seen_camera = false;
        let mut open: Option<PersonScript> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if let Some(person) = open.as_mut() {
                if fields[0] == "end" {
                    s.people.push(open.take().expect("open person"));
                    continue;
                }
                let v: Vec<f64> = nums(&fields, 3, line, "waypoint")?;
                person.waypoints.push(Waypoint {
                    t: v[0],
                    position: WorldPoint::new(v[1], v[2]),
                });
                continue;
            }
            let (key, rest) = (fields[0], &fields[1..]);
            match key {
                "name" => {
                    s.name = rest.join(" ");
                }
                "frames" => s.frames = nums::<usize>(rest, 1, line, key)?[0],
                "rate" => s.frame_rate = nums::<f64>(rest, 1, line, key)?[0],
                "seed" => s.seed = nums::<u64>(rest, 1, line, key)?[0],
                "image" => {
                    let v: Vec<usize> = nums(rest, 2, line, key)?;
                    s.image_size = (v[0], v[1]);
                }
                "camera" => {
                    let v: Vec<f64> = nums(rest, 7, line, key)?;
                    s.camera = PinholeCamera {
                        focal: v[0],
                        principal: (v[1], v[2]),
                        position: [v[3], v[4], v[5]],
                        pitch: v[6],
                    };
                    seen_camera = true;
                }
                "correspondence" => {
                    let v: Vec<f64> = nums(rest, 4, line, key)?;
                    s.correspondences.push(Correspondence {
                        u: v[0],
                        v: v[1],
                        x: v[2],
                        y: v[3],
                    });
                }
                "world" => {
                    let v: Vec<f64> = nums(rest, 3, line, key)?;
                    s.world = WorldBounds {
                        width: v[0],
                        height: v[1],
                        resolution: v[2],
                    };
                }
                "obstacle" => {
                    let v: Vec<f64> = nums(rest, 4, line, key)?;
                    s.obstacles.push(Obstacle {
                        min: WorldPoint::new(v[0].min(v[2]), v[1].min(v[3])),
                        max: WorldPoint::new(v[0].max(v[2]), v[1].max(v[3])),
                    });
                }
                "robot" => {
                    let v: Vec<f64> = nums(rest, 5, line, key)?;
                    s.robot = RobotScript {
                        start: WorldPoint::new(v[0], v[1]),
                        goal: WorldPoint::new(v[2], v[3]),
                        speed: v[4],
                    };
                }
                "clutter" => {
                    if rest.len() != 3 {
                        return Err(Error::Script {
                            line,
                            detail: "`clutter` expects a kind and two coordinates".into(),
                        });
                    }
                    let kind = rest[0].parse::<ClutterKind>().map_err(|detail| Error::Script { line, detail })?;
                    let v: Vec<f64> = nums(&rest[1..], 2, line, key)?;
                    s.clutter.push(ClutterItem {
                        kind,
                        position: WorldPoint::new(v[0], v[1]),
                    });
                }
                "person" => {
                    let id: Vec<u64> = nums(&rest[..rest.len().min(2)], 2, line, key)?;
                    let height: f64 = nums(&rest[2..], 1, line, key)?[0];
                    open = Some(PersonScript {
                        id: id[0],
                        sprite: id[1],
                        height,
                        waypoints: Vec::new(),
                    });
                }
                other => {
                    return Err(Error::Script {
                        line,
                        detail: format!("unknown keyword `{other}`"),
                    })
                }
            }
        }
        if let Some(p) = open {
            return Err(Error::Scenario(format!("person {} is missing its `end` line", p.id)));
        }
        if !seen_camera {
            return Err(Error::Scenario("no `camera` line".into()));
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let c = &self.camera;
        let _ = writeln!(t, "name {}", self.name);
        let _ = writeln!(t, "frames {}", self.frames);
        let _ = writeln!(t, "rate {}", self.frame_rate);
        let _ = writeln!(t, "seed {}", self.seed);
        let _ = writeln!(t, "image {} {}", self.image_size.0, self.image_size.1);
        let _ = writeln!(
            t,
            "camera {} {} {} {} {} {} {}",
            c.focal, c.principal.0, c.principal.1, c.position[0], c.position[1], c.position[2], c.pitch
        );
        for k in &self.correspondences {
            let _ = writeln!(t, "correspondence {} {} {} {}", k.u, k.v, k.x, k.y);
        }
        let _ = writeln!(t, "world {} {} {}", self.world.width, self.world.height, self.world.resolution);
        for o in &self.obstacles {
            let _ = writeln!(t, "obstacle {} {} {} {}", o.min.x, o.min.y, o.max.x, o.max.y);
        }
        let r = &self.robot;
        let _ = writeln!(t, "robot {} {} {} {} {}", r.start.x, r.start.y, r.goal.x, r.goal.y, r.speed);
        for k in &self.clutter {
            let _ = writeln!(t, "clutter {} {} {}", k.kind, k.position.x, k.position.y);
        }
        for p in &self.people {
            let _ = writeln!(t, "person {} {} {}", p.id, p.sprite, p.height);
            for w in &p.waypoints {
                let _ = writeln!(t, "{} {} {}", w.t, w.position.x, w.position.y);
            }
            let _ = writeln!(t, "end");
        }
        t
    }

    fn empty_template() -> Self {
        Self {
            name: "unnamed".into(),
            frames: 1,
            frame_rate: 10.0,
            seed: 0,
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
}

/// Ceiling camera behind the room's near wall looking down the room.
pub fn default_camera() -> PinholeCamera {
    PinholeCamera {
        focal: 320.0,
        principal: (160.0, 120.0),
        position: [4.0, -0.5, 3.5],
        pitch: 40.0,
    }
}
