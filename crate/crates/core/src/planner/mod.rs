//! A* search over the state lattice against a time-indexed obstacle world.

mod collision;
mod margin;
mod world;

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

pub use collision::{collision_free, ellipsoid_distance_lower_bound, ellipsoid_touches_sphere};
pub use margin::{Margin, MarginProvider};
pub use world::{Bounds, Obstacle, OccupancyWorld};

use crate::error::{Error, Result};
use crate::lattice::{add3, norm3, sub3, LatticeConfig, MotionPrimitive, Plan, State, Vec3};

#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub x_s: State,
    pub x_g: State,
    pub t_s: f64,
    pub world: OccupancyWorld,
    pub margin: MarginProvider,
    pub robot_radius: f64,
    /// Per-axis allowance for perception and other agents.
    pub extra_margin: Vec3,
    /// Plans may not end later than `t_s + horizon`.
    pub horizon: f64,
}

impl PlanningProblem {
    pub fn new(x_s: State, x_g: State, world: OccupancyWorld) -> Self {
        Self {
            x_s,
            x_g,
            t_s: 0.0,
            world,
            margin: MarginProvider::none(),
            robot_radius: 0.0,
            extra_margin: [0.0; 3],
            horizon: 60.0,
        }
    }
}

/// Lower bound on the remaining cost from a position to the goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heuristic {
    /// Smallest cost per second of any primitive.
    pub cost_rate: f64,
    /// Speed no primitive sequence can exceed between lattice nodes.
    pub speed: f64,
}

impl Heuristic {
    pub fn new(primitives: &[MotionPrimitive], config: &LatticeConfig) -> Self {
        let cost_rate = primitives.iter().map(|p| p.cost / p.t_f).fold(f64::INFINITY, f64::min);
        let fastest = primitives.iter().map(|p| norm3(p.x_f.position) / p.t_f).fold(0.0, f64::max);
        Self {
            cost_rate: if cost_rate.is_finite() { cost_rate } else { 0.0 },
            speed: config.nominal_speed.max(fastest),
        }
    }

    pub fn estimate(&self, position: Vec3, goal: Vec3) -> f64 {
        if self.speed <= 0.0 {
            return 0.0;
        }
        norm3(sub3(goal, position)) / self.speed * self.cost_rate
    }
}

type NodeKey = ([i64; 3], [i8; 3], i64);

struct Node {
    position: Vec3,
    velocity_key: [i8; 3],
    t: f64,
    g: f64,
    parent: Option<(usize, usize)>,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    seq: u64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other.f.total_cmp(&self.f).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Whether executing `prim` from `origin` starting at time `t0` keeps every
/// reference sample inside the bounds and clear of obstacles.
pub fn primitive_is_safe(prim: &MotionPrimitive, origin: Vec3, t0: f64, problem: &PlanningProblem, u_max: f64) -> bool {
    let world = &problem.world;
    if world.obstacles.is_empty() {
        return prim.reference.iter().all(|s| world.bounds.contains(add3(origin, s.state.position)));
    }
    // Between samples the robot and obstacles move at most this far from the
    // nearest sample.
    let top_speed = prim.reference.iter().map(|s| norm3(s.state.velocity)).fold(0.0, f64::max);
    let sweep = 0.5 * prim.dt_ref * (top_speed + 3f64.sqrt() * u_max * prim.dt_ref + world.max_obstacle_speed());
    prim.reference.iter().all(|s| {
        let p = add3(origin, s.state.position);
        world.bounds.contains(p)
            && collision_free(
                t0 + s.t,
                p,
                world,
                &problem.margin.margin(prim, s.t),
                problem.robot_radius,
                problem.extra_margin,
                sweep,
            )
    })
}

/// Minimum-cost collision-free plan from `x_s` to `x_g`.
pub fn plan(problem: &PlanningProblem, primitives: &[MotionPrimitive], config: &LatticeConfig) -> Result<Plan> {
    problem.world.validate()?;
    let start_key = config
        .position_key(problem.x_s.position)
        .zip(config.velocity_key(problem.x_s.velocity))
        .filter(|_| problem.world.bounds.contains(problem.x_s.position))
        .ok_or_else(|| Error::InvalidStart(format!("{:?} is not an in-bounds lattice state", problem.x_s)))?;
    let goal_key = config
        .position_key(problem.x_g.position)
        .zip(config.velocity_key(problem.x_g.velocity))
        .filter(|_| problem.world.bounds.contains(problem.x_g.position))
        .ok_or_else(|| Error::InvalidGoal(format!("{:?} is not an in-bounds lattice state", problem.x_g)))?;

    let mut by_velocity: HashMap<[i8; 3], Vec<&MotionPrimitive>> = HashMap::new();
    for p in primitives {
        if let Some(k) = config.velocity_key(p.x_i.velocity) {
            by_velocity.entry(k).or_default().push(p);
        }
    }
    let heuristic = Heuristic::new(primitives, config);
    let goal_pos = problem.x_g.position;
    let timed = !problem.world.is_static();
    let bucket = |t: f64| if timed { ((t - problem.t_s) / config.dt_ref).round() as i64 } else { 0 };

    let mut nodes = vec![Node {
        position: problem.x_s.position,
        velocity_key: start_key.1,
        t: problem.t_s,
        g: 0.0,
        parent: None,
    }];
    let mut best: HashMap<NodeKey, (f64, usize)> = HashMap::new();
    best.insert((start_key.0, start_key.1, 0), (0.0, 0));
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Open { f: heuristic.estimate(problem.x_s.position, goal_pos), seq, node: 0 });
    let mut safe_cache: HashMap<([i64; 3], usize, i64), bool> = HashMap::new();

    while let Some(Open { node, .. }) = open.pop() {
        let (position, velocity_key, t, g) = {
            let n = &nodes[node];
            (n.position, n.velocity_key, n.t, n.g)
        };
        let pos_key = config.position_key(position).expect("lattice node");
        let key = (pos_key, velocity_key, bucket(t));
        if best.get(&key).is_some_and(|&(bg, bn)| bg < g || bn != node) {
            continue;
        }
        if pos_key == goal_key.0 && velocity_key == goal_key.1 {
            return Ok(reconstruct(&nodes, node, problem));
        }
        let Some(successors) = by_velocity.get(&velocity_key) else {
            continue;
        };
        for prim in successors {
            let t_next = t + prim.t_f;
            if t_next - problem.t_s > problem.horizon + 1e-9 {
                continue;
            }
            let safe = *safe_cache
                .entry((pos_key, prim.id, bucket(t)))
                .or_insert_with(|| primitive_is_safe(prim, position, t, problem, config.u_max));
            if !safe {
                continue;
            }
            let next_pos = add3(position, prim.x_f.position);
            let Some(next_vel) = config.velocity_key(prim.x_f.velocity) else {
                continue;
            };
            let Some(next_pos_key) = config.position_key(next_pos) else {
                continue;
            };
            let g_next = g + prim.cost;
            let next_key = (next_pos_key, next_vel, bucket(t_next));
            if best.get(&next_key).is_some_and(|&(bg, _)| bg <= g_next) {
                continue;
            }
            nodes.push(Node {
                position: next_pos,
                velocity_key: next_vel,
                t: t_next,
                g: g_next,
                parent: Some((node, prim.id)),
            });
            let id = nodes.len() - 1;
            best.insert(next_key, (g_next, id));
            seq += 1;
            open.push(Open { f: g_next + heuristic.estimate(next_pos, goal_pos), seq, node: id });
        }
    }
    Err(Error::NoPlan)
}

fn reconstruct(nodes: &[Node], mut node: usize, problem: &PlanningProblem) -> Plan {
    let mut ids = Vec::new();
    while let Some((parent, prim)) = nodes[node].parent {
        ids.push(prim);
        node = parent;
    }
    ids.reverse();
    Plan::new(problem.t_s, problem.x_s, ids)
}
