//! Procedural frame rendering: ray-cast floor and walls, clutter props and
//! articulated pedestrian silhouettes, followed by sensor noise.
//!
//! Image coordinates put the centre of pixel `(i, j)` at `(i, j)`, the same
//! convention the crop resampler uses.

use pednav_core::acf::BoundingBox;
use pednav_core::geometry::WorldPoint;
use pednav_core::imageproc::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::PinholeCamera;
use crate::script::{ClutterKind, ScenarioScript};
use crate::{Error, Result};

type Rgb = [f32; 3];

const WALL_HEIGHT: f64 = 3.0;
/// People shorter than this many pixels are marked as ignorable.
pub const MIN_PIXEL_HEIGHT: f64 = 60.0;
/// People with more of their body box hidden than this are marked as ignorable.
pub const MAX_OCCLUSION: f64 = 0.4;

/// Per-person ground truth for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub person: u64,
    pub bbox: BoundingBox,
    pub world: WorldPoint,
    pub foot: (f64, f64),
    /// Fraction of the body box covered by nearer people.
    pub occlusion: f64,
    /// Truncated by the image border, heavily occluded or too small; such
    /// people are neither required nor penalized by the evaluation.
    pub ignore: bool,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub image: Image,
    pub truth: Vec<GroundTruth>,
}

/// Hashes two integers into a well-spread seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RGB drawing surface with 2×2 supersampled coverage.
pub(crate) struct Canvas {
    pub img: Image,
}

const SUBSAMPLES: [(f64, f64); 4] = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)];

impl Canvas {
    pub fn new(img: Image) -> Self {
        Self { img }
    }

    fn blend(&mut self, x: usize, y: usize, color: Rgb, alpha: f32) {
        let px = self.img.pixel_mut(x, y);
        for c in 0..3 {
            px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
        }
    }

    /// Fills the region where `inside(x, y)` holds within the given pixel
    /// bounds, colouring each pixel with `color(x, y)`.
    fn fill(&mut self, bounds: (f64, f64, f64, f64), alpha: f32, inside: impl Fn(f64, f64) -> bool, color: impl Fn(f64, f64) -> Rgb) {
        let (w, h) = (self.img.width() as f64, self.img.height() as f64);
        let x0 = bounds.0.floor().max(0.0) as usize;
        let y0 = bounds.1.floor().max(0.0) as usize;
        let x1 = bounds.2.ceil().min(w - 1.0);
        let y1 = bounds.3.ceil().min(h - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (fx, fy) = (x as f64, y as f64);
                let hits = SUBSAMPLES.iter().filter(|(dx, dy)| inside(fx + dx, fy + dy)).count();
                if hits > 0 {
                    let a = alpha * hits as f32 / 4.0;
                    self.blend(x, y, color(fx, fy), a);
                }
            }
        }
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], alpha: f32, color: impl Fn(f64, f64) -> Rgb) {
        if pts.len() < 3 {
            return;
        }
        let bounds = pts.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |b, p| {
            (b.0.min(p.0), b.1.min(p.1), b.2.max(p.0), b.3.max(p.1))
        });
        let inside = |x: f64, y: f64| {
            let mut odd = false;
            let mut j = pts.len() - 1;
            for i in 0..pts.len() {
                let (xi, yi) = pts[i];
                let (xj, yj) = pts[j];
                if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                    odd = !odd;
                }
                j = i;
            }
            odd
        };
        self.fill(bounds, alpha, inside, color);
    }

    pub fn ellipse(&mut self, c: (f64, f64), rx: f64, ry: f64, alpha: f32, color: impl Fn(f64, f64) -> Rgb) {
        if rx <= 0.0 || ry <= 0.0 {
            return;
        }
        let inside = |x: f64, y: f64| {
            let (dx, dy) = ((x - c.0) / rx, (y - c.1) / ry);
            dx * dx + dy * dy <= 1.0
        };
        self.fill((c.0 - rx, c.1 - ry, c.0 + rx, c.1 + ry), alpha, inside, color);
    }

    /// Quadrilateral "limb" from `a` to `b` with widths `wa` and `wb`.
    pub fn limb(&mut self, a: (f64, f64), b: (f64, f64), wa: f64, wb: f64, color: impl Fn(f64, f64) -> Rgb) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy).max(1e-9);
        let (nx, ny) = (-dy / len, dx / len);
        let pts = [
            (a.0 + nx * wa / 2.0, a.1 + ny * wa / 2.0),
            (b.0 + nx * wb / 2.0, b.1 + ny * wb / 2.0),
            (b.0 - nx * wb / 2.0, b.1 - ny * wb / 2.0),
            (a.0 - nx * wa / 2.0, a.1 - ny * wa / 2.0),
        ];
        self.polygon(&pts, 1.0, color);
    }
}

fn flat(c: Rgb) -> impl Fn(f64, f64) -> Rgb {
    move |_, _| c
}

fn scale(c: Rgb, f: f32) -> Rgb {
    [(c[0] * f).clamp(0.0, 1.0), (c[1] * f).clamp(0.0, 1.0), (c[2] * f).clamp(0.0, 1.0)]
}

fn random_color(rng: &mut impl Rng, lo: f32, hi: f32) -> Rgb {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

/// Scenario-wide look: floor tiles, walls and lighting.
struct Palette {
    tile: Rgb,
    grout: Rgb,
    wall: Rgb,
    skirting: Rgb,
    tile_size: f64,
    brightness: f32,
}

impl Palette {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x7111));
        let base: f32 = rng.random_range(0.45..0.7);
        let tint = random_color(&mut rng, -0.06, 0.06);
        Self {
            tile: [base + tint[0], base + tint[1], base * 0.92 + tint[2]],
            grout: scale([base, base, base], 0.6),
            wall: random_color(&mut rng, 0.6, 0.85),
            skirting: random_color(&mut rng, 0.15, 0.35),
            tile_size: rng.random_range(0.4..0.7),
            brightness: rng.random_range(0.85..1.1),
        }
    }
}

fn background(cam: &PinholeCamera, script: &ScenarioScript, pal: &Palette, u: f64, v: f64) -> Rgb {
    let d = cam.ray(u, v);
    let c = cam.position;
    let (w, h) = (script.world.width, script.world.height);
    let mut best: Option<(f64, u8)> = None;
    let mut consider = |t: f64, kind: u8| {
        if t > 0.0 && best.is_none_or(|b| t < b.0) {
            best = Some((t, kind));
        }
    };
    if d[2] < 0.0 {
        consider(-c[2] / d[2], 0);
    }
    let at = |t: f64| [c[0] + t * d[0], c[1] + t * d[1], c[2] + t * d[2]];
    if d[1] > 0.0 {
        let t = (h - c[1]) / d[1];
        let p = at(t);
        if (0.0..=WALL_HEIGHT).contains(&p[2]) && (0.0..=w).contains(&p[0]) {
            consider(t, 1);
        }
    }
    for (wall_x, kind) in [(0.0, 2u8), (w, 3u8)] {
        if d[0].abs() > 1e-12 {
            let t = (wall_x - c[0]) / d[0];
            let p = at(t);
            if (0.0..=WALL_HEIGHT).contains(&p[2]) && p[1] <= h {
                consider(t, kind);
            }
        }
    }
    let Some((t, kind)) = best else {
        return scale(pal.wall, 1.1);
    };
    let p = at(t);
    match kind {
        0 => {
            let (fx, fy) = (p[0] / pal.tile_size, p[1] / pal.tile_size);
            let (ix, iy) = (fx.floor(), fy.floor());
            let (ex, ey) = ((fx - ix).min(1.0 - (fx - ix)), (fy - iy).min(1.0 - (fy - iy)));
            if ex.min(ey) * pal.tile_size < 0.012 {
                return pal.grout;
            }
            let shade = 0.94 + 0.12 * ((mix(ix as i64 as u64, iy as i64 as u64) % 1000) as f32 / 1000.0);
            scale(pal.tile, shade)
        }
        _ => {
            let along = if kind == 1 { p[0] } else { p[1] };
            if p[2] < 0.12 {
                return pal.skirting;
            }
            if (along / 1.2).fract() < 0.015 {
                return scale(pal.wall, 0.8);
            }
            let side = if kind == 1 { 1.0 } else { 0.88 };
            scale(pal.wall, side * (1.0 - 0.05 * (p[2] / WALL_HEIGHT) as f32))
        }
    }
}

struct Appearance {
    skin: Rgb,
    hair: Rgb,
    shirt: Rgb,
    pants: Rgb,
    shoes: Rgb,
    width: f64,
    stride: f64,
}

impl Appearance {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        const SKIN: [Rgb; 4] = [[0.93, 0.78, 0.67], [0.85, 0.65, 0.5], [0.64, 0.45, 0.32], [0.42, 0.3, 0.21]];
        const PANTS: [Rgb; 5] = [[0.12, 0.16, 0.3], [0.08, 0.08, 0.09], [0.35, 0.25, 0.16], [0.4, 0.4, 0.42], [0.6, 0.55, 0.4]];
        Self {
            skin: SKIN[rng.random_range(0..SKIN.len())],
            hair: random_color(&mut rng, 0.02, 0.3),
            shirt: random_color(&mut rng, 0.05, 0.95),
            pants: PANTS[rng.random_range(0..PANTS.len())],
            shoes: random_color(&mut rng, 0.02, 0.2),
            width: rng.random_range(0.9..1.15),
            stride: rng.random_range(1.2..1.6),
        }
    }
}

/// Draws a person whose feet touch `foot` and whose head top is `h` pixels
/// above; `phase` is the gait phase in radians, `swing` its amplitude (0 when
/// standing).
fn draw_person(cv: &mut Canvas, foot: (f64, f64), h: f64, look: &Appearance, phase: f64, swing: f64) {
    let (uf, vf) = foot;
    let y = |f: f64| vf - f * h;
    let wf = look.width;
    cv.ellipse((uf, vf), 0.17 * h, 0.035 * h, 0.35, flat([0.0, 0.0, 0.0]));

    let s = phase.sin() * swing;
    let hip_l = (uf - 0.05 * h * wf, y(0.5));
    let hip_r = (uf + 0.05 * h * wf, y(0.5));
    let foot_l = (uf - 0.05 * h * wf - 0.1 * h * s, y(0.02));
    let foot_r = (uf + 0.05 * h * wf + 0.1 * h * s, y(0.02));
    let pants = look.pants;
    for (hip, ft, shade) in [(hip_l, foot_l, 0.85f32), (hip_r, foot_r, 1.0)] {
        cv.limb(hip, ft, 0.075 * h * wf, 0.05 * h, flat(scale(pants, shade)));
        cv.ellipse((ft.0, ft.1), 0.045 * h, 0.022 * h, 1.0, flat(look.shoes));
    }

    let arm = |side: f64, sgn: f64| {
        let shoulder = (uf + side * 0.12 * h * wf, y(0.81));
        let hand = (uf + side * 0.15 * h * wf + sgn * 0.07 * h * s, y(0.47));
        (shoulder, hand)
    };
    let sleeve = scale(look.shirt, 0.82);
    let (sh, hd) = arm(-1.0, 1.0);
    cv.limb(sh, hd, 0.05 * h, 0.04 * h, flat(sleeve));
    cv.ellipse(hd, 0.022 * h, 0.025 * h, 1.0, flat(look.skin));

    let half_s = 0.125 * h * wf;
    let half_h = 0.095 * h * wf;
    let torso = [(uf - half_s, y(0.83)), (uf + half_s, y(0.83)), (uf + half_h, y(0.49)), (uf - half_h, y(0.49))];
    let shirt = look.shirt;
    cv.polygon(&torso, 1.0, move |x, _| scale(shirt, 1.0 - 0.3 * ((x - uf).abs() / half_s) as f32));

    let (sh, hd) = arm(1.0, -1.0);
    cv.limb(sh, hd, 0.05 * h, 0.04 * h, flat(scale(look.shirt, 0.92)));
    cv.ellipse(hd, 0.022 * h, 0.025 * h, 1.0, flat(look.skin));

    cv.limb((uf, y(0.87)), (uf, y(0.82)), 0.04 * h, 0.045 * h, flat(scale(look.skin, 0.9)));
    cv.ellipse((uf, y(0.93)), 0.058 * h * wf, 0.065 * h, 1.0, flat(look.hair));
    let skin = look.skin;
    cv.ellipse((uf, y(0.915)), 0.05 * h * wf, 0.056 * h, 1.0, move |x, _| scale(skin, 1.0 - 0.2 * ((x - uf).abs() / (0.05 * h)) as f32));
}

fn draw_clutter(cv: &mut Canvas, cam: &PinholeCamera, kind: ClutterKind, at: WorldPoint, seed: u64) {
    let Some(foot) = cam.project([at.x, at.y, 0.0]) else { return };
    let Some(s) = cam.vertical_scale(at) else { return };
    let depth = cam.to_camera([at.x, at.y, 0.0])[2];
    let m = cam.focal / depth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, v) = foot;
    let up = |hgt: f64| v - hgt * s;
    match kind {
        ClutterKind::Pole => {
            let metal = random_color(&mut rng, 0.35, 0.7);
            cv.ellipse((u, v), 0.15 * m, 0.05 * m, 1.0, flat(scale(metal, 0.7)));
            let hw = 0.03 * m;
            cv.polygon(&[(u - hw, up(1.9)), (u + hw, up(1.9)), (u + hw, v), (u - hw, v)], 1.0, move |x, _| {
                scale(metal, 0.8 + 0.4 * (1.0 - ((x - u + hw * 0.3).abs() / hw)).max(0.0) as f32)
            });
            cv.ellipse((u, up(1.95)), 0.06 * m, 0.06 * m, 1.0, flat(scale(metal, 1.1)));
        }
        ClutterKind::Bin => {
            let body = random_color(&mut rng, 0.1, 0.7);
            let (wb, wt) = (0.19 * m, 0.23 * m);
            cv.polygon(&[(u - wt, up(0.7)), (u + wt, up(0.7)), (u + wb, v), (u - wb, v)], 1.0, move |x, _| {
                scale(body, 1.0 - 0.35 * ((x - u).abs() / wt) as f32)
            });
            cv.ellipse((u, up(0.7)), wt, 0.05 * m, 1.0, flat(scale(body, 0.6)));
        }
        ClutterKind::Crate => {
            let wood = [rng.random_range(0.45..0.65), rng.random_range(0.3..0.42), rng.random_range(0.15..0.25)];
            let hw = 0.3 * m;
            let top = up(0.55);
            cv.polygon(&[(u - hw, top), (u + hw, top), (u + hw, v), (u - hw, v)], 1.0, move |_, y| {
                let plank = ((y - top) / (v - top) * 4.0).fract();
                if plank < 0.08 {
                    scale(wood, 0.6)
                } else {
                    wood
                }
            });
        }
        ClutterKind::Plant => {
            let pot = [0.7, 0.38, 0.22];
            cv.polygon(&[(u - 0.18 * m, up(0.35)), (u + 0.18 * m, up(0.35)), (u + 0.13 * m, v), (u - 0.13 * m, v)], 1.0, flat(pot));
            let green = [rng.random_range(0.1..0.25), rng.random_range(0.35..0.6), rng.random_range(0.1..0.25)];
            for _ in 0..9 {
                let cx = u + rng.random_range(-0.22..0.22) * m;
                let cy = up(rng.random_range(0.5..1.25));
                let shade = rng.random_range(0.7..1.2);
                cv.ellipse((cx, cy), rng.random_range(0.08..0.16) * m, rng.random_range(0.1..0.2) * s, 1.0, flat(scale(green, shade)));
            }
        }
        ClutterKind::CoatStand => {
            let wood = [0.3, 0.2, 0.12];
            cv.ellipse((u, v), 0.2 * m, 0.06 * m, 1.0, flat(wood));
            cv.limb((u, v), (u, up(1.8)), 0.04 * m, 0.035 * m, flat(wood));
            let coats = rng.random_range(1..=2);
            for k in 0..coats {
                let color = random_color(&mut rng, 0.05, 0.8);
                let side = if k == 0 { -1.0 } else { 1.0 } * 0.08 * m;
                let hw_top = 0.1 * m;
                let hw_bot = 0.2 * m;
                let bottom = up(rng.random_range(0.7..1.0));
                cv.polygon(
                    &[(u + side - hw_top, up(1.65)), (u + side + hw_top, up(1.65)), (u + side + hw_bot, bottom), (u + side - hw_bot, bottom)],
                    1.0,
                    move |x, _| scale(color, 1.0 - 0.3 * ((x - u - side).abs() / hw_bot) as f32),
                );
            }
            cv.ellipse((u, up(1.8)), 0.07 * m, 0.04 * m, 1.0, flat(wood));
        }
    }
}

fn body_box(b: &BoundingBox) -> BoundingBox {
    BoundingBox {
        x: b.x + 0.3 * b.w,
        y: b.y,
        w: 0.4 * b.w,
        h: b.h,
    }
}

/// Renders frame `frame` of the script together with its ground truth.
pub fn render_frame(script: &ScenarioScript, frame: usize) -> Result<RenderedFrame> {
    if frame >= script.frames {
        return Err(Error::Scenario(format!("frame {frame} is past the scenario's {} frames", script.frames)));
    }
    let cam = &script.camera;
    let (w, h) = script.image_size;
    let t = script.time_of(frame);
    let pal = Palette::new(script.seed);

    let mut img = Image::new(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let c = background(cam, script, &pal, x as f64, y as f64);
            img.pixel_mut(x, y).copy_from_slice(&c);
        }
    }
    let mut cv = Canvas::new(img);

    enum Item {
        Clutter(usize),
        Person(usize),
    }
    let mut items: Vec<(f64, Item)> = Vec::new();
    for (i, c) in script.clutter.iter().enumerate() {
        items.push((cam.to_camera([c.position.x, c.position.y, 0.0])[2], Item::Clutter(i)));
    }
    let positions: Vec<WorldPoint> = script.people.iter().map(|p| p.position_at(t)).collect();
    for (i, p) in positions.iter().enumerate() {
        items.push((cam.to_camera([p.x, p.y, 0.0])[2], Item::Person(i)));
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut truth = Vec::new();
    let mut drawn_boxes: Vec<(f64, BoundingBox, usize)> = Vec::new();
    for (depth, item) in &items {
        if *depth <= 0.1 {
            continue;
        }
        match item {
            Item::Clutter(i) => {
                let c = &script.clutter[*i];
                draw_clutter(&mut cv, cam, c.kind, c.position, mix(script.seed, 1000 + *i as u64));
            }
            Item::Person(i) => {
                let person = &script.people[*i];
                let Some(proj) = cam.person(positions[*i], person.height) else { continue };
                let look = Appearance::new(mix(script.seed, person.sprite));
                let (vx, vy) = person.velocity_at(t);
                let speed = vx.hypot(vy);
                let phase = std::f64::consts::TAU * t * speed / look.stride + person.sprite as f64;
                let swing = (speed / 0.8).min(1.0);
                draw_person(&mut cv, proj.foot, proj.pixel_height, &look, phase, swing);
                drawn_boxes.push((*depth, proj.bbox, truth.len()));
                let b = proj.bbox;
                let inside = b.x >= 0.0 && b.y >= 0.0 && b.right() <= w as f64 && b.bottom() <= h as f64;
                let visible = b.right() > 0.0 && b.bottom() > 0.0 && b.x < w as f64 && b.y < h as f64;
                if visible {
                    truth.push(GroundTruth {
                        person: person.id,
                        bbox: b,
                        world: positions[*i],
                        foot: proj.foot,
                        occlusion: 0.0,
                        ignore: !inside || proj.pixel_height < MIN_PIXEL_HEIGHT,
                    });
                } else {
                    drawn_boxes.pop();
                }
            }
        }
    }
    // Occlusion: a person drawn later (nearer) hides part of earlier ones.
    for (k, (_, b, idx)) in drawn_boxes.iter().enumerate() {
        let own = body_box(b);
        let hidden: f64 = drawn_boxes[k + 1..].iter().map(|(_, nb, _)| own.intersection(&body_box(nb))).sum();
        let g = &mut truth[*idx];
        g.occlusion = (hidden / own.area()).clamp(0.0, 1.0);
        if g.occlusion > MAX_OCCLUSION {
            g.ignore = true;
        }
    }

    let mut img = cv.img;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(script.seed, 0xF00D + frame as u64));
    let noise = Normal::new(0.0f32, 0.012).expect("valid noise");
    let b = pal.brightness;
    for v in img.data_mut() {
        *v = (*v * b + noise.sample(&mut rng)).clamp(0.0, 1.0);
    }
    truth.sort_by_key(|g| g.person);
    Ok(RenderedFrame { image: img, truth })
}
