//! Pinhole camera looking along +y, pitched down towards the floor (z = 0).

use nalgebra::{Matrix3, Vector3};
use pednav_core::acf::BoundingBox;
use pednav_core::geometry::{Correspondence, Homography, WorldPoint};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels.
    pub principal: (f64, f64),
    /// Optical centre in world metres.
    pub position: [f64; 3],
    /// Downward pitch of the optical axis, degrees.
    pub pitch: f64,
}

/// Where a standing person appears in the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonProjection {
    /// Square box whose side is the head-to-foot pixel height, with the foot
    /// point at the middle of its lower edge.
    pub bbox: BoundingBox,
    pub foot: (f64, f64),
    pub pixel_height: f64,
}

impl PinholeCamera {
    fn trig(&self) -> (f64, f64) {
        let p = self.pitch.to_radians();
        (p.sin(), p.cos())
    }

    /// World point in camera coordinates (right, down, forward).
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.trig();
        let [cx, cy, cz] = self.position;
        let (dx, dy, dz) = (p[0] - cx, p[1] - cy, p[2] - cz);
        [dx, -s * dy - c * dz, c * dy - s * dz]
    }

    /// Pixel coordinates, or `None` for points at or behind the camera plane.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let [x, y, z] = self.to_camera(p);
        if z <= 1e-9 {
            return None;
        }
        Some((self.focal * x / z + self.principal.0, self.focal * y / z + self.principal.1))
    }

    /// Unit ray direction in world coordinates through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let (s, c) = self.trig();
        let a = (u - self.principal.0) / self.focal;
        let b = (v - self.principal.1) / self.focal;
        let d = [a, -s * b + c, -c * b - s];
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    }

    /// Floor-to-image homography `(x, y, 1) ↦ (u, v, 1)` up to scale.
    pub fn floor_to_image(&self) -> Matrix3<f64> {
        let (s, c) = self.trig();
        let [cx, cy, cz] = self.position;
        let k = Matrix3::new(self.focal, 0.0, self.principal.0, 0.0, self.focal, self.principal.1, 0.0, 0.0, 1.0);
        let m = Matrix3::new(1.0, 0.0, -cx, 0.0, -s, s * cy + c * cz, 0.0, c, -c * cy + s * cz);
        k * m
    }

    /// Exact image-to-floor homography.
    pub fn image_to_floor(&self) -> Result<Homography> {
        let inv = self
            .floor_to_image()
            .try_inverse()
            .ok_or_else(|| Error::Scenario("camera looks parallel to the floor".into()))?;
        Ok(Homography::new(inv / inv[(2, 2)])?)
    }

    pub fn project_floor(&self, p: WorldPoint) -> Option<(f64, f64)> {
        let h = self.floor_to_image() * Vector3::new(p.x, p.y, 1.0);
        if h.z <= 1e-9 {
            return None;
        }
        Some((h.x / h.z, h.y / h.z))
    }

    /// Pixels per metre of a vertical extent standing at `p`, i.e. the image
    /// height of a 1 m tall object there.
    pub fn vertical_scale(&self, p: WorldPoint) -> Option<f64> {
        let foot = self.project([p.x, p.y, 0.0])?;
        let top = self.project([p.x, p.y, 1.0])?;
        Some(foot.1 - top.1)
    }

    /// Image box of a person of `height` metres standing at `p`.
    pub fn person(&self, p: WorldPoint, height: f64) -> Option<PersonProjection> {
        let foot = self.project([p.x, p.y, 0.0])?;
        let head = self.project([p.x, p.y, height])?;
        let h = foot.1 - head.1;
        if h.is_nan() || h <= 0.0 {
            return None;
        }
        let bbox = BoundingBox::new(foot.0 - h / 2.0, foot.1 - h, h, h).ok()?;
        Some(PersonProjection {
            bbox,
            foot,
            pixel_height: h,
        })
    }

    /// Image/floor pairs for the given floor points that project inside a
    /// `width`×`height` image.
    pub fn correspondences(&self, points: &[WorldPoint], width: usize, height: usize) -> Vec<Correspondence> {
        points
            .iter()
            .filter_map(|p| {
                let (u, v) = self.project_floor(*p)?;
                (u >= 0.0 && v >= 0.0 && u <= width as f64 && v <= height as f64).then_some(Correspondence { u, v, x: p.x, y: p.y })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pednav_core::geometry::{foot_point, project_to_floor};

    fn cam() -> PinholeCamera {
        PinholeCamera {
            focal: 320.0,
            principal: (160.0, 120.0),
            position: [4.0, -0.5, 3.5],
            pitch: 40.0,
        }
    }

    #[test]
    fn principal_ray_hits_the_principal_point() {
        let c = cam();
        let d = c.ray(160.0, 120.0);
        let t = 5.0;
        let p = [c.position[0] + t * d[0], c.position[1] + t * d[1], c.position[2] + t * d[2]];
        let (u, v) = c.project(p).unwrap();
        assert!((u - 160.0).abs() < 1e-9 && (v - 120.0).abs() < 1e-9);
        assert!(d[2] < 0.0);
    }

    #[test]
    fn floor_homography_agrees_with_projection() {
        let c = cam();
        let h = c.image_to_floor().unwrap();
        for (x, y) in [(3.0, 2.0), (5.5, 4.1), (4.0, 3.2)] {
            let (u, v) = c.project([x, y, 0.0]).unwrap();
            let w = project_to_floor((u, v), &h).unwrap();
            assert!((w.x - x).abs() < 1e-9 && (w.y - y).abs() < 1e-9);
            let (pu, pv) = c.project_floor(WorldPoint::new(x, y)).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
    }

    #[test]
    fn person_box_has_foot_at_bottom_centre() {
        let c = cam();
        let p = c.person(WorldPoint::new(4.3, 3.0), 1.7).unwrap();
        let f = foot_point(&p.bbox);
        assert!((f.0 - p.foot.0).abs() < 1e-9 && (f.1 - p.foot.1).abs() < 1e-9);
        assert!(p.pixel_height > 64.0 && p.pixel_height < 200.0, "{}", p.pixel_height);
        let closer = c.person(WorldPoint::new(4.3, 2.0), 1.7).unwrap();
        assert!(closer.foot.1 > p.foot.1);
    }
}
