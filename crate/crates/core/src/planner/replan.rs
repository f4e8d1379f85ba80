use serde::{Deserialize, Serialize};

use super::{human_cost_field, path_cost, plan_astar, CostMap, HanConfig, OccupancyGrid, Path, PersonState, Plan};
use crate::geometry::WorldPoint;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplanConfig {
    /// Position change (m) of any person that triggers a replan.
    pub position_delta: f64,
    /// Velocity change (m/s) of any person that triggers a replan.
    pub velocity_delta: f64,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        Self {
            position_delta: 0.3,
            velocity_delta: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanOutcome {
    pub plan: Plan,
    pub replanned: bool,
    /// Ids of the people whose appearance, disappearance or change caused the replan.
    pub triggers: Vec<u64>,
}

/// Keeps the last plan and recomputes it only when the people it was made
/// for have changed enough, or the robot has left the path.
#[derive(Debug, Clone)]
pub struct Replanner {
    pub config: ReplanConfig,
    pub han: HanConfig,
    reference: Vec<(u64, PersonState)>,
    plan: Option<Plan>,
    costmap: Option<CostMap>,
    pub plans_computed: usize,
}

impl Replanner {
    pub fn new(config: ReplanConfig, han: HanConfig) -> Self {
        Self {
            config,
            han,
            reference: Vec::new(),
            plan: None,
            costmap: None,
            plans_computed: 0,
        }
    }

    fn changed_people(&self, people: &[(u64, PersonState)]) -> Vec<u64> {
        let mut out = Vec::new();
        for (id, p) in people {
            match self.reference.iter().find(|(rid, _)| rid == id) {
                None => out.push(*id),
                Some((_, r)) => {
                    let dp = p.position.distance(&r.position);
                    let dv = (p.velocity.0 - r.velocity.0).hypot(p.velocity.1 - r.velocity.1);
                    if dp > self.config.position_delta || dv > self.config.velocity_delta {
                        out.push(*id);
                    }
                }
            }
        }
        for (rid, _) in &self.reference {
            if !people.iter().any(|(id, _)| id == rid) {
                out.push(*rid);
            }
        }
        out.sort_unstable();
        out
    }

    fn trimmed(path: &Path, cell: (usize, usize), costmap: &CostMap) -> Option<Path> {
        let k = path.cells.iter().position(|c| *c == cell)?;
        let cells = path.cells[k..].to_vec();
        Some(Path {
            waypoints: path.waypoints[k..].to_vec(),
            cost: path_cost(costmap, &cells),
            cells,
        })
    }

    pub fn step(&mut self, grid: &OccupancyGrid, people: &[(u64, PersonState)], robot: WorldPoint, goal: WorldPoint) -> Result<ReplanOutcome> {
        let triggers = self.changed_people(people);
        let robot_cell = grid.cell_of(robot);
        if let (Some(plan), Some(costmap)) = (&self.plan, &self.costmap) {
            if triggers.is_empty() && grid == &costmap.grid {
                match plan {
                    Plan::NoPath => {
                        return Ok(ReplanOutcome {
                            plan: Plan::NoPath,
                            replanned: false,
                            triggers,
                        })
                    }
                    Plan::Found(path) => {
                        if let Some(t) = robot_cell.and_then(|c| Self::trimmed(path, c, costmap)) {
                            return Ok(ReplanOutcome {
                                plan: Plan::Found(t),
                                replanned: false,
                                triggers,
                            });
                        }
                    }
                }
            }
        }
        let states: Vec<PersonState> = people.iter().map(|(_, p)| *p).collect();
        let field = human_cost_field(grid, &states, &self.han);
        let costmap = CostMap::new(grid.clone(), field)?;
        let plan = plan_astar(&costmap, robot, goal)?;
        self.plans_computed += 1;
        self.reference = people.to_vec();
        self.plan = Some(plan.clone());
        self.costmap = Some(costmap);
        if !triggers.is_empty() {
            log::info!("replanned for people {triggers:?}");
        }
        Ok(ReplanOutcome {
            plan,
            replanned: true,
            triggers,
        })
    }
}
