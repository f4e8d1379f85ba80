use std::fmt::Write as _;

use crate::geometry::WorldPoint;
use crate::{Error, Result};

/// Occupancy grid. Cell `(cx, cy)` covers
/// `[origin.x + cx·res, origin.x + (cx+1)·res) × [origin.y + cy·res, …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub origin: WorldPoint,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: WorldPoint) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid("grid resolution must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid must have at least one cell"));
        }
        Ok(Self {
            resolution,
            width,
            height,
            origin,
            occupied: vec![false; width * height],
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.occupied[self.index(cx, cy)]
    }

    pub fn set_occupied(&mut self, cx: usize, cy: usize, occupied: bool) {
        let i = self.index(cx, cy);
        self.occupied[i] = occupied;
    }

    pub fn occupied_by_index(&self, index: usize) -> bool {
        self.occupied[index]
    }

    pub fn cell_of(&self, p: WorldPoint) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn center(&self, cx: usize, cy: usize) -> WorldPoint {
        WorldPoint::new(
            self.origin.x + (cx as f64 + 0.5) * self.resolution,
            self.origin.y + (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// Parses the text raster:
    ///
    /// ```text
    /// resolution 0.1
    /// origin 0 0
    /// ..#..
    /// .....
    /// ```
    ///
    /// `.` is free and `#` occupied; the first raster row is the top of the
    /// map (largest y).
    pub fn parse(text: &str) -> Result<Self> {
        let mut resolution = None;
        let mut origin = WorldPoint::new(0.0, 0.0);
        let mut rows: Vec<&str> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let bad = |d: &str| Error::format("grid", format!("line {}: {d}", n + 1));
            if let Some(rest) = line.strip_prefix("resolution") {
                resolution = Some(rest.trim().parse::<f64>().map_err(|_| bad("bad resolution"))?);
            } else if let Some(rest) = line.strip_prefix("origin") {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("bad origin"))?;
                if v.len() != 2 {
                    return Err(bad("origin needs two numbers"));
                }
                origin = WorldPoint::new(v[0], v[1]);
            } else if line.chars().all(|c| c == '.' || c == '#') {
                rows.push(line);
            } else {
                return Err(bad("unexpected content"));
            }
        }
        let resolution = resolution.ok_or_else(|| Error::format("grid", "missing resolution header"))?;
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::format("grid", "raster rows differ in length"));
        }
        let mut grid = Self::new(width, rows.len(), resolution, origin)?;
        let h = rows.len();
        for (r, row) in rows.iter().enumerate() {
            for (cx, ch) in row.chars().enumerate() {
                grid.set_occupied(cx, h - 1 - r, ch == '#');
            }
        }
        Ok(grid)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("resolution {}\norigin {} {}\n", self.resolution, self.origin.x, self.origin.y);
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                s.push(if self.is_occupied(cx, cy) { '#' } else { '.' });
            }
            let _ = writeln!(s);
        }
        s
    }
}
