#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

use primguard::lattice::{LatticeConfig, MotionPrimitive, State, Vec3, STATE_DIM};
use primguard::model::{DimSeries, MarginKind, PrimitiveExecutionModel};
use primguard::planner::{primitive_is_safe, Bounds, MarginProvider, Obstacle, OccupancyWorld, PlanningProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Key = ([i64; 3], [i64; 3]);

fn pos_key(p: Vec3, res: f64) -> [i64; 3] {
    p.map(|c| (c / res).round() as i64)
}

fn vel_key(v: Vec3) -> [i64; 3] {
    v.map(|c| (c * 1e9).round() as i64)
}

/// Exhaustive Dijkstra over the time-expanded lattice graph. Nodes are
/// (position, velocity, arrival step) and an edge is any primitive whose
/// start velocity matches, that is safe from that node at that time and that
/// ends within the horizon. Returns the least cost to reach each
/// (position, velocity) at any time.
pub fn dijkstra(problem: &PlanningProblem, prims: &[MotionPrimitive], config: &LatticeConfig) -> HashMap<Key, f64> {
    let res = config.position_resolution;
    let step = |t: f64| ((t - problem.t_s) / config.dt_ref).round() as i64;
    let start = (pos_key(problem.x_s.position, res), vel_key(problem.x_s.velocity), 0i64);
    let mut dist: HashMap<([i64; 3], [i64; 3], i64), f64> = HashMap::new();
    let mut states: Vec<(Vec3, Vec3, f64)> = vec![(problem.x_s.position, problem.x_s.velocity, problem.t_s)];
    let mut heap = BinaryHeap::new();
    dist.insert(start, 0.0);
    heap.push(Reverse((0.0f64.to_bits(), 0usize)));
    let mut best: HashMap<Key, f64> = HashMap::new();
    while let Some(Reverse((bits, idx))) = heap.pop() {
        let g = f64::from_bits(bits);
        let (p, v, t) = states[idx];
        let key = (pos_key(p, res), vel_key(v), step(t));
        if dist.get(&key).is_some_and(|&d| d < g) {
            continue;
        }
        best.entry((key.0, key.1)).and_modify(|b| *b = b.min(g)).or_insert(g);
        for prim in prims {
            if vel_key(prim.x_i.velocity) != key.1 {
                continue;
            }
            let t_next = t + prim.t_f;
            if t_next - problem.t_s > problem.horizon + 1e-9 {
                continue;
            }
            if !primitive_is_safe(prim, p, t, problem, config.u_max) {
                continue;
            }
            let q = [0, 1, 2].map(|d| p[d] + prim.x_f.position[d]);
            let next = (pos_key(q, res), vel_key(prim.x_f.velocity), step(t_next));
            let g_next = g + prim.cost;
            if dist.get(&next).is_some_and(|&d| d <= g_next) {
                continue;
            }
            dist.insert(next, g_next);
            states.push((q, prim.x_f.velocity, t_next));
            heap.push(Reverse((g_next.to_bits(), states.len() - 1)));
        }
    }
    best
}

pub fn oracle_cost(problem: &PlanningProblem, prims: &[MotionPrimitive], config: &LatticeConfig) -> Option<f64> {
    let res = config.position_resolution;
    dijkstra(problem, prims, config)
        .get(&(pos_key(problem.x_g.position, res), vel_key(problem.x_g.velocity)))
        .copied()
}

/// Small planar world with a few static or moving spheres, and start and
/// goal at rest on lattice points.
pub fn random_instance(rng: &mut ChaCha8Rng) -> PlanningProblem {
    let w = rng.random_range(2..=4) as f64;
    let h = rng.random_range(2..=4) as f64;
    let world_bounds = Bounds { min: [0.0; 3], max: [w, h, 0.0] };
    let mut world = OccupancyWorld::empty(world_bounds);
    for _ in 0..rng.random_range(0..=3) {
        let c = [rng.random_range(0.0..w), rng.random_range(0.0..h), 0.0];
        let radius = rng.random_range(0.2..0.7);
        if rng.random_bool(0.3) {
            let end = [rng.random_range(0.0..w), rng.random_range(0.0..h), 0.0];
            let t1 = rng.random_range(4.0..16.0);
            world.obstacles.push(Obstacle { radius, keyframes: vec![[0.0, c[0], c[1], 0.0], [t1, end[0], end[1], 0.0]] });
        } else {
            world.obstacles.push(Obstacle::fixed(c, radius));
        }
    }
    let lattice_point = |rng: &mut ChaCha8Rng| [rng.random_range(0..=w as i64) as f64, rng.random_range(0..=h as i64) as f64, 0.0];
    let s = lattice_point(rng);
    let mut g = lattice_point(rng);
    while g == s {
        g = lattice_point(rng);
    }
    let mut problem = PlanningProblem::new(State::at_rest(s), State::at_rest(g), world);
    problem.robot_radius = rng.random_range(0.0..0.15);
    problem.horizon = 20.0;
    problem
}

/// Execution models whose mean follows each primitive's reference shifted by
/// a fixed offset, with constant variance.
pub fn offset_models(prims: &[MotionPrimitive], offset: Vec3, var: [f64; STATE_DIM]) -> Arc<BTreeMap<usize, PrimitiveExecutionModel>> {
    let dt = 0.05;
    Arc::new(
        prims
            .iter()
            .map(|prim| {
                let n = (prim.t_f / dt).round() as usize + 1;
                let per_dim = (0..STATE_DIM)
                    .map(|d| DimSeries {
                        mu: (0..n)
                            .map(|k| {
                                let x = prim.state_at(k as f64 * dt).to_array();
                                x[d] + if d < 3 { offset[d] } else { 0.0 }
                            })
                            .collect(),
                        var: vec![var[d]; n],
                    })
                    .collect();
                (prim.id, PrimitiveExecutionModel { primitive_id: prim.id, dt_model: dt, j_i: 10, per_dim })
            })
            .collect(),
    )
}

/// One random margin-inflation pair. Returns (safe with the smaller margin,
/// safe with the larger margin).
pub fn margin_inflation_pair(seed: u64, prims: &[MotionPrimitive], config: &LatticeConfig) -> (bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prim = &prims[rng.random_range(0..prims.len())];
    let origin = [rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64, rng.random_range(-2..=2) as f64];
    let mut world = OccupancyWorld::empty(Bounds { min: [-6.0; 3], max: [6.0; 3] });
    // Place obstacles near the reference path so both outcomes occur.
    for _ in 0..rng.random_range(1..=3) {
        let tau = rng.random_range(0.0..prim.t_f);
        let r = prim.state_at(tau).position;
        let c = [0, 1, 2].map(|d| origin[d] + r[d] + rng.random_range(-1.0..1.0));
        world.obstacles.push(Obstacle::fixed(c, rng.random_range(0.1..0.6)));
    }
    let mut small = PlanningProblem::new(State::at_rest(origin), State::at_rest(origin), world);
    small.robot_radius = rng.random_range(0.0..0.2);
    small.extra_margin = [0; 3].map(|_| rng.random_range(0.0..0.2));
    let mut large = small.clone();
    large.robot_radius += rng.random_range(0.0..0.2);
    for d in 0..3 {
        large.extra_margin[d] += rng.random_range(0.0..0.2);
    }
    if rng.random_bool(0.5) {
        let offset = [0; 3].map(|_| rng.random_range(-0.1..0.1));
        let var = [0; STATE_DIM].map(|_| rng.random_range(1e-4..1e-2));
        let models = offset_models(std::slice::from_ref(prim), offset, var);
        let p_small = rng.random_range(0.5..0.99);
        let p_large = rng.random_range(p_small..0.9999);
        small.margin = MarginProvider::new(MarginKind::LearnedModel, p_small, models.clone(), None);
        large.margin = MarginProvider::new(MarginKind::LearnedModel, p_large, models, None);
    }
    let t0 = 0.0;
    (
        primitive_is_safe(prim, origin, t0, &small, config.u_max),
        primitive_is_safe(prim, origin, t0, &large, config.u_max),
    )
}
