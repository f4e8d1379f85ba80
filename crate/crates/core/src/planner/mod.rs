//! Human-aware path planning: occupancy grids, per-person cost fields that
//! encode personal space and the pass-on-the-left rule, 8-connected A*, and
//! a replanner driven by tracker output.
//!
//! The cost shapes are behavioural stand-ins: an isotropic Gaussian around
//! every person, a forward-stretched Gaussian ahead of anyone walking, and a
//! multiplicative penalty on a walker's right-hand side so that the cheapest
//! way past them is on their left.

mod astar;
mod grid;
mod han;
mod replan;

pub use astar::{neighbors, plan_astar, CostMap, Path, Plan};
pub use grid::OccupancyGrid;
pub use han::{human_cost_field, person_cost, HanConfig, PersonState};
pub use replan::{ReplanConfig, ReplanOutcome, Replanner};

/// Traversal cost of a cell sequence under the A* edge model.
pub fn path_cost(costmap: &CostMap, cells: &[(usize, usize)]) -> f64 {
    let res = costmap.grid.resolution;
    let mut cost = 0.0;
    for w in cells.windows(2) {
        let (a, b) = (w[0], w[1]);
        let diagonal = a.0 != b.0 && a.1 != b.1;
        let len = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
        cost += len * res * (1.0 + costmap.total(costmap.grid.index(b.0, b.1)));
    }
    cost
}
