//! Image-to-floor geometry: foot points, homography calibration from point
//! correspondences (normalized DLT) and projection onto the floor plane.

use std::io::BufRead;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::acf::BoundingBox;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &WorldPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Middle of the box's lower edge, in pixels.
pub fn foot_point(b: &BoundingBox) -> (f64, f64) {
    (b.x + b.w / 2.0, b.y + b.h)
}

/// Invertible image → floor map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("homography has non-finite entries"));
        }
        if matrix.determinant().abs() <= 1e-12 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    /// Builds from nine row-major entries.
    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::invalid(format!("homography needs 9 values, got {}", values.len())));
        }
        Self::new(Matrix3::from_row_slice(values))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn to_row_vec(&self) -> Vec<f64> {
        self.matrix.transpose().iter().copied().collect()
    }

    pub fn inverse(&self) -> Homography {
        Homography {
            matrix: self.matrix.try_inverse().expect("checked non-singular at construction"),
        }
    }

    /// Applies the map to `(u, v)`; fails when the point maps to infinity.
    pub fn apply(&self, u: f64, v: f64) -> Result<(f64, f64)> {
        let p = self.matrix * Vector3::new(u, v, 1.0);
        if p[2].abs() < 1e-12 || !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Unprojectable { u, v });
        }
        Ok((p[0] / p[2], p[1] / p[2]))
    }
}

pub fn project_to_floor(p: (f64, f64), h: &Homography) -> Result<WorldPoint> {
    let (x, y) = h.apply(p.0, p.1)?;
    Ok(WorldPoint::new(x, y))
}

/// Image point `(u, v)` in pixels and its floor position `(x, y)` in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub u: f64,
    pub v: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub homography: Homography,
    /// Root-mean-square floor distance between projected image points and
    /// their world positions, metres.
    pub rms: f64,
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64), scale: f64) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    cross.abs() <= 1e-9 * scale * scale
}

fn extent(points: &[(f64, f64)]) -> f64 {
    let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in points {
        lo = (lo.0.min(p.0), lo.1.min(p.1));
        hi = (hi.0.max(p.0), hi.1.max(p.1));
    }
    (hi.0 - lo.0).max(hi.1 - lo.1).max(f64::MIN_POSITIVE)
}

/// Finds four correspondences with no three collinear on either side, or
/// reports a collinear triple.
fn check_configuration(c: &[Correspondence]) -> Result<()> {
    let img: Vec<(f64, f64)> = c.iter().map(|p| (p.u, p.v)).collect();
    let world: Vec<(f64, f64)> = c.iter().map(|p| (p.x, p.y)).collect();
    let (si, sw) = (extent(&img), extent(&world));
    let bad_triple = |i: usize, j: usize, k: usize| -> Option<&'static str> {
        if collinear(img[i], img[j], img[k], si) {
            Some("image")
        } else if collinear(world[i], world[j], world[k], sw) {
            Some("world")
        } else {
            None
        }
    };
    let n = c.len();
    let mut first_bad = None;
    for a in 0..n {
        for b in a + 1..n {
            for d in b + 1..n {
                for e in d + 1..n {
                    let quad = [a, b, d, e];
                    let mut ok = true;
                    'triples: for x in 0..4 {
                        for y in x + 1..4 {
                            for z in y + 1..4 {
                                if let Some(side) = bad_triple(quad[x], quad[y], quad[z]) {
                                    first_bad.get_or_insert((side, quad[x], quad[y], quad[z]));
                                    ok = false;
                                    break 'triples;
                                }
                            }
                        }
                    }
                    if ok {
                        return Ok(());
                    }
                }
            }
        }
    }
    let (side, i, j, k) = first_bad.expect("at least four points were checked");
    Err(Error::Degenerate(format!(
        "correspondences {i}, {j} and {k} are collinear in the {side} plane and no four points are in general position"
    )))
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(points: &[(f64, f64)]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (cx, cy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let mean = points.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    let s = if mean > 0.0 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Direct linear transform with coordinate normalization.
pub fn calibrate_homography(correspondences: &[Correspondence]) -> Result<Calibration> {
    if correspondences.len() < 4 {
        return Err(Error::invalid(format!("calibration needs at least 4 correspondences, got {}", correspondences.len())));
    }
    if correspondences.iter().any(|c| ![c.u, c.v, c.x, c.y].iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("calibration correspondences must be finite"));
    }
    check_configuration(correspondences)?;
    let img: Vec<(f64, f64)> = correspondences.iter().map(|c| (c.u, c.v)).collect();
    let world: Vec<(f64, f64)> = correspondences.iter().map(|c| (c.x, c.y)).collect();
    let (t_img, t_world) = (normalizer(&img), normalizer(&world));

    let rows = (2 * correspondences.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in img.iter().zip(&world).enumerate() {
        let pn = t_img * Vector3::new(p.0, p.1, 1.0);
        let qn = t_world * Vector3::new(q.0, q.1, 1.0);
        let (x, y) = (pn[0], pn[1]);
        let (xp, yp) = (qn[0], qn[1]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, xp * x, xp * y, xp];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y, yp];
        for k in 0..9 {
            a[(2 * i, k)] = r0[k];
            a[(2 * i + 1, k)] = r1[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nine singular values");
    let h = v_t.row(idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_world_inv = t_world.try_inverse().ok_or_else(|| Error::Degenerate("world points coincide".into()))?;
    let mut m = t_world_inv * hn * t_img;
    let scale = if m[(2, 2)].abs() > 1e-12 { m[(2, 2)] } else { m.norm() };
    m /= scale;
    let homography = Homography::new(m)?;
    let mut sq = 0.0;
    for c in correspondences {
        let w = project_to_floor((c.u, c.v), &homography)?;
        sq += (w.x - c.x).powi(2) + (w.y - c.y).powi(2);
    }
    Ok(Calibration {
        homography,
        rms: (sq / correspondences.len() as f64).sqrt(),
    })
}

/// Parses `u v X Y` lines; blank lines and `#` comments are skipped.
pub fn read_correspondences(r: impl BufRead) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("calibration", format!("line {}: expected `u v X Y`", n + 1)))?;
        if v.len() != 4 {
            return Err(Error::format("calibration", format!("line {}: expected 4 numbers, got {}", n + 1, v.len())));
        }
        out.push(Correspondence {
            u: v[0],
            v: v[1],
            x: v[2],
            y: v[3],
        });
    }
    Ok(out)
}
