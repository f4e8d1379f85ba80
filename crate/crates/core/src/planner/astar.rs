use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::OccupancyGrid;
use crate::geometry::WorldPoint;
use crate::{Error, Result};

/// Occupancy plus human cost; `total` is infinite in occupied cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub grid: OccupancyGrid,
    pub human: Vec<f64>,
}

impl CostMap {
    pub fn new(grid: OccupancyGrid, human: Vec<f64>) -> Result<Self> {
        if human.len() != grid.len() {
            return Err(Error::invalid("human cost field does not match the grid size"));
        }
        if human.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("human costs must be finite and non-negative"));
        }
        Ok(Self { grid, human })
    }

    pub fn free(grid: OccupancyGrid) -> Self {
        let human = vec![0.0; grid.len()];
        Self { grid, human }
    }

    pub fn total(&self, index: usize) -> f64 {
        if self.grid.occupied_by_index(index) {
            f64::INFINITY
        } else {
            self.human[index]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub waypoints: Vec<WorldPoint>,
    pub cells: Vec<(usize, usize)>,
    pub cost: f64,
}

impl Path {
    /// `x,y` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y\n");
        for p in &self.waypoints {
            s.push_str(&format!("{:.4},{:.4}\n", p.x, p.y));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Found(Path),
    NoPath,
}

impl Plan {
    pub fn path(&self) -> Option<&Path> {
        match self {
            Plan::Found(p) => Some(p),
            Plan::NoPath => None,
        }
    }
}

/// The eight neighbours of a cell with their step lengths in cells.
/// Diagonal steps may not cut the corner of an occupied cell.
pub fn neighbors(grid: &OccupancyGrid, index: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let (cx, cy) = grid.coords(index);
    const STEPS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    STEPS.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (cx as isize + dx, cy as isize + dy);
        if nx < 0 || ny < 0 || nx >= grid.width as isize || ny >= grid.height as isize {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if grid.is_occupied(nx, ny) {
            return None;
        }
        if dx != 0 && dy != 0 && (grid.is_occupied(nx, cy) || grid.is_occupied(cx, ny)) {
            return None;
        }
        let len = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
        Some((grid.index(nx, ny), len))
    })
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (f, h, index)
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn endpoint(cm: &CostMap, p: WorldPoint, what: &str) -> Result<usize> {
    let (cx, cy) = cm.grid.cell_of(p).ok_or_else(|| Error::invalid(format!("{what} ({}, {}) is outside the grid", p.x, p.y)))?;
    if cm.grid.is_occupied(cx, cy) {
        return Err(Error::invalid(format!("{what} ({}, {}) is in an occupied cell", p.x, p.y)));
    }
    Ok(cm.grid.index(cx, cy))
}

/// 8-connected A*. Moving into a cell costs `step length × (1 + total)`;
/// the heuristic is the Euclidean distance times the cheapest multiplier on
/// the map, so it never overestimates.
pub fn plan_astar(cm: &CostMap, start: WorldPoint, goal: WorldPoint) -> Result<Plan> {
    let s = endpoint(cm, start, "start")?;
    let g_idx = endpoint(cm, goal, "goal")?;
    let grid = &cm.grid;
    let res = grid.resolution;
    let min_mult = (0..grid.len())
        .filter(|i| !grid.occupied_by_index(*i))
        .map(|i| 1.0 + cm.human[i])
        .fold(f64::INFINITY, f64::min)
        * (1.0 - 1e-12);
    let (gx, gy) = grid.coords(g_idx);
    let heuristic = |i: usize| {
        let (x, y) = grid.coords(i);
        (x as f64 - gx as f64).hypot(y as f64 - gy as f64) * res * min_mult
    };

    let mut g = vec![f64::INFINITY; grid.len()];
    let mut parent = vec![usize::MAX; grid.len()];
    let mut heap = BinaryHeap::new();
    g[s] = 0.0;
    heap.push(Open {
        f: heuristic(s),
        h: heuristic(s),
        index: s,
    });
    while let Some(Open { f, h, index }) = heap.pop() {
        if f > g[index] + h {
            continue;
        }
        if index == g_idx {
            break;
        }
        for (n, len) in neighbors(grid, index) {
            let cand = g[index] + len * res * (1.0 + cm.total(n));
            if cand < g[n] {
                g[n] = cand;
                parent[n] = index;
                let hn = heuristic(n);
                heap.push(Open { f: cand + hn, h: hn, index: n });
            }
        }
    }
    if !g[g_idx].is_finite() {
        return Ok(Plan::NoPath);
    }
    let mut cells = vec![g_idx];
    while let Some(&last) = cells.last() {
        if last == s {
            break;
        }
        cells.push(parent[last]);
    }
    cells.reverse();
    let cells: Vec<(usize, usize)> = cells.into_iter().map(|i| grid.coords(i)).collect();
    Ok(Plan::Found(Path {
        waypoints: cells.iter().map(|&(x, y)| grid.center(x, y)).collect(),
        cells,
        cost: g[g_idx],
    }))
}
