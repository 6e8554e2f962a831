//! Closed-loop execution of plans on a double-integrator plant with a PD
//! tracking controller, disturbances and injectable faults.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{valid_triplets, MotionPrimitive, Plan, State, Vec3, STATE_DIM};
use crate::model::{ExecutionTrace, TraceSample};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step, seconds.
    pub dt_sim: f64,
    /// Observation rate, Hz.
    pub obs_rate: f64,
    pub kp: f64,
    pub kd: f64,
    /// Per-axis standard deviation of the acceleration disturbance drawn
    /// every integration step, m/s^2.
    pub process_noise_std: f64,
    /// Observation noise per state dimension.
    pub obs_noise_std: [f64; STATE_DIM],
    /// Constant acceleration disturbance, m/s^2.
    pub bias: Vec3,
    /// Linear drag coefficient, 1/s. The feedforward does not model it.
    pub drag: f64,
    /// Observation timestamps are jittered uniformly by this fraction of the
    /// sampling period.
    pub timestamp_jitter: f64,
    /// Bound on `|u|_inf` for the controller command.
    pub u_max: f64,
    /// Tracking error in meters that aborts an execution.
    pub divergence_limit: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_sim: 0.005,
            obs_rate: 50.0,
            kp: 6.0,
            kd: 5.0,
            process_noise_std: 0.3,
            obs_noise_std: [0.01, 0.01, 0.01, 0.03, 0.03, 0.03],
            bias: [0.0; 3],
            drag: 0.5,
            timestamp_jitter: 0.1,
            u_max: 5.0,
            divergence_limit: 10.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Deterministic noise-free configuration.
    pub fn noiseless() -> Self {
        Self {
            process_noise_std: 0.0,
            obs_noise_std: [0.0; STATE_DIM],
            drag: 0.0,
            timestamp_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.dt_sim, self.obs_rate, self.u_max, self.divergence_limit];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("dt_sim, obs_rate, u_max and divergence_limit must be positive".into()));
        }
        if self.obs_rate * self.dt_sim > 1.0 {
            return Err(Error::InvalidConfig("observation rate exceeds the integration rate".into()));
        }
        let non_negative = [self.process_noise_std, self.drag, self.kp, self.kd, self.timestamp_jitter];
        if non_negative.iter().chain(&self.obs_noise_std).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("noise levels, drag and gains must be non-negative".into()));
        }
        if self.timestamp_jitter >= 0.5 {
            return Err(Error::InvalidConfig("timestamp jitter must be below half a period".into()));
        }
        if self.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("bias must be finite".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Per-axis wind bias drawn from `N(0, std^2)`.
pub fn draw_wind_bias(seed: u64, std: f64) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, &[0x7769_6E64]));
    let normal = Normal::new(0.0, std.max(0.0)).expect("finite std");
    [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Additional constant acceleration of `magnitude` along `direction`.
    ExtraBias,
    /// Process noise multiplied by `magnitude`.
    NoiseScale,
    /// Controller gains multiplied by `1 - magnitude`.
    GainLoss,
    /// Half-sine acceleration pulse with peak `magnitude` along `direction`.
    Gust,
}

/// A disturbance active on `[onset, onset + duration]`, in seconds since
/// the plan start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub magnitude: f64,
    pub onset: f64,
    pub duration: f64,
    #[serde(default = "default_direction")]
    pub direction: Vec3,
}

fn default_direction() -> Vec3 {
    [1.0, 0.0, 0.0]
}

impl FaultSpec {
    pub fn new(kind: FaultKind, magnitude: f64, onset: f64, duration: f64) -> Self {
        Self { kind, magnitude, onset, duration, direction: default_direction() }
    }

    pub fn along(mut self, direction: Vec3) -> Self {
        self.direction = direction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.onset >= 0.0 && self.onset.is_finite()) || !self.magnitude.is_finite() || !(self.duration >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid fault {self:?}")));
        }
        if self.direction.iter().map(|d| d * d).sum::<f64>().sqrt() == 0.0 {
            return Err(Error::InvalidConfig("fault direction must be nonzero".into()));
        }
        Ok(())
    }

    fn active(&self, t: f64) -> bool {
        t >= self.onset && t <= self.onset + self.duration
    }

    fn unit(&self) -> Vec3 {
        let n = self.direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        self.direction.map(|d| d / n)
    }
}

/// Effect of all active faults at one instant.
struct FaultEffect {
    accel: Vec3,
    noise_scale: f64,
    gain_scale: f64,
}

fn fault_effect(faults: &[FaultSpec], t: f64) -> FaultEffect {
    let mut e = FaultEffect { accel: [0.0; 3], noise_scale: 1.0, gain_scale: 1.0 };
    for f in faults.iter().filter(|f| f.active(t)) {
        match f.kind {
            FaultKind::ExtraBias => {
                let u = f.unit();
                for d in 0..3 {
                    e.accel[d] += f.magnitude * u[d];
                }
            }
            FaultKind::Gust => {
                let s = if f.duration > 0.0 { (std::f64::consts::PI * (t - f.onset) / f.duration).sin() } else { 1.0 };
                let u = f.unit();
                for d in 0..3 {
                    e.accel[d] += f.magnitude * s * u[d];
                }
            }
            FaultKind::NoiseScale => e.noise_scale *= f.magnitude,
            FaultKind::GainLoss => e.gain_scale *= 1.0 - f.magnitude,
        }
    }
    e
}

/// World-frame reference of a plan, evaluated at arbitrary times.
struct PlanReference<'a> {
    segments: Vec<(f64, Vec3, &'a MotionPrimitive)>,
    t_s: f64,
    t_g: f64,
    start: State,
}

impl<'a> PlanReference<'a> {
    fn new(plan: &Plan, primitives: &'a [MotionPrimitive]) -> Result<Self> {
        plan.validate(primitives)?;
        let segments = plan
            .segment_offsets(primitives)?
            .into_iter()
            .zip(&plan.primitive_ids)
            .map(|((t0, off), &id)| (t0, off, &primitives[id]))
            .collect();
        Ok(Self { segments, t_s: plan.t_s, t_g: plan.end_time(primitives)?, start: plan.x_i })
    }

    /// Index of the segment containing `t`; the last segment is closed.
    fn segment(&self, t: f64) -> Option<usize> {
        if self.segments.is_empty() {
            return None;
        }
        let k = self.segments.partition_point(|(t0, _, _)| *t0 <= t);
        Some(k.saturating_sub(1))
    }

    fn at(&self, t: f64) -> (State, Vec3) {
        match self.segment(t) {
            None => (self.start, [0.0; 3]),
            Some(k) => {
                let (t0, off, prim) = self.segments[k];
                let (s, u) = prim.sample_at(t - t0);
                let u = if t > self.t_g { [0.0; 3] } else { u };
                (s.translated(off), u)
            }
        }
    }
}

/// One integration step of the full-state log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSample {
    pub t: f64,
    pub state: State,
    pub reference: State,
    pub control: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// One trace per plan primitive, `tau` re-zeroed at each primitive start
    /// and positions relative to the primitive's world-frame origin.
    pub traces: Vec<ExecutionTrace>,
    pub log: Vec<LogSample>,
}

fn observation_times(t_s: f64, t_g: f64, config: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = 1.0 / config.obs_rate;
    let n = ((t_g - t_s) / period + 1e-9).floor() as usize;
    let j = config.timestamp_jitter;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        // Jitter is centered a fraction `j` after each nominal time so every
        // sample stays inside its own period.
        let jitter = if j > 0.0 { j + rng.random_range(-j..=j) } else { 0.0 };
        let t = t_s + (k as f64 + jitter) * period;
        if t <= t_g {
            out.push(t);
        }
    }
    out
}

fn normal3(rng: &mut ChaCha8Rng) -> Vec3 {
    [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)]
}

/// Simulate the plan from its start state under the tracking controller.
pub fn execute(plan: &Plan, primitives: &[MotionPrimitive], config: &SimConfig, faults: &[FaultSpec]) -> Result<Execution> {
    config.validate()?;
    for f in faults {
        f.validate()?;
    }
    let reference = PlanReference::new(plan, primitives)?;
    let (t_s, t_g) = (reference.t_s, reference.t_g);
    let mut process_rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, &[1]));
    let mut obs_rng = ChaCha8Rng::seed_from_u64(seed::mix(config.seed, &[2]));

    let obs_times = observation_times(t_s, t_g, config, &mut obs_rng);
    let mut traces: Vec<ExecutionTrace> = reference
        .segments
        .iter()
        .map(|(_, _, p)| ExecutionTrace::new(p.id, [None; 3]))
        .collect();
    let mut next_obs = 0;

    let observe = |t: f64, state: &State, obs_rng: &mut ChaCha8Rng, traces: &mut Vec<ExecutionTrace>| {
        let mut x = state.to_array();
        for (xd, sd) in x.iter_mut().zip(&config.obs_noise_std) {
            let z: f64 = obs_rng.sample(StandardNormal);
            *xd += sd * z;
        }
        if let Some(k) = reference.segment(t) {
            let (t0, offset, _) = reference.segments[k];
            for d in 0..3 {
                x[d] -= offset[d];
            }
            traces[k].samples.push(TraceSample { t, tau: (t - t0).max(0.0), state: State::from_array(x) });
        }
    };

    let mut state = plan.x_i;
    let mut t = t_s;
    let steps = ((t_g - t_s) / config.dt_sim).ceil() as usize;
    let mut log = Vec::with_capacity(steps + 1);
    for step in 0..steps.max(1) {
        let h = (t_g - t).min(config.dt_sim).max(0.0);
        let (ref_now, _) = reference.at(t);
        let err = crate::lattice::norm3(crate::lattice::sub3(ref_now.position, state.position));
        if !err.is_finite() || err > config.divergence_limit {
            return Err(Error::Diverged { time: t, error: err });
        }
        let (_, u_ff) = reference.at(t + 0.5 * h);
        let effect = fault_effect(faults, t - t_s);
        let noise = normal3(&mut process_rng);
        let mut u_cmd = [0.0; 3];
        let mut accel = [0.0; 3];
        for d in 0..3 {
            let fb = effect.gain_scale
                * (config.kp * (ref_now.position[d] - state.position[d])
                    + config.kd * (ref_now.velocity[d] - state.velocity[d]));
            u_cmd[d] = (u_ff[d] + fb).clamp(-config.u_max, config.u_max);
            accel[d] = u_cmd[d] + config.bias[d] + effect.accel[d] - config.drag * state.velocity[d]
                + config.process_noise_std * effect.noise_scale * noise[d];
        }
        log.push(LogSample { t, state, reference: ref_now, control: u_cmd });

        // Observations inside this step see the exact zero-order-hold state.
        let t_end = if step + 1 >= steps { t_g } else { t + h };
        while next_obs < obs_times.len() && (obs_times[next_obs] < t_end || (step + 1 >= steps && obs_times[next_obs] <= t_g)) {
            let dt = (obs_times[next_obs] - t).clamp(0.0, h);
            observe(obs_times[next_obs], &advance(&state, accel, dt), &mut obs_rng, &mut traces);
            next_obs += 1;
        }
        state = advance(&state, accel, h);
        t = if step + 1 >= steps { t_g } else { t_s + (step + 1) as f64 * config.dt_sim };
    }
    let (ref_end, _) = reference.at(t);
    log.push(LogSample { t, state, reference: ref_end, control: [0.0; 3] });
    Ok(Execution { traces, log })
}

fn advance(s: &State, a: Vec3, h: f64) -> State {
    let mut p = s.position;
    let mut v = s.velocity;
    for d in 0..3 {
        p[d] += v[d] * h + 0.5 * a[d] * h * h;
        v[d] += a[d] * h;
    }
    State::new(p, v)
}

/// Lowest-id primitive matching `pred`.
fn find_primitive(primitives: &[MotionPrimitive], pred: impl Fn(&MotionPrimitive) -> bool) -> Option<&MotionPrimitive> {
    primitives.iter().find(|p| pred(p))
}

/// Wrap a triplet into a plan that starts and ends at rest at the origin,
/// adding ramp primitives where needed. Returns the plan and the index of
/// the middle primitive within it.
pub fn augment_triplet(triplet: [usize; 3], primitives: &[MotionPrimitive]) -> Result<(Plan, usize)> {
    let [a_p, a_i, a_n] = triplet;
    for id in triplet {
        if primitives.get(id).map(|p| p.id) != Some(id) {
            return Err(Error::UnknownPrimitive(id));
        }
    }
    let mut ids = Vec::with_capacity(5);
    let first = &primitives[a_p];
    if !first.x_i.is_at_rest() {
        let ramp = find_primitive(primitives, |q| q.x_i.is_at_rest() && q.x_f.velocity == first.x_i.velocity)
            .ok_or_else(|| Error::IncompatiblePlan(format!("no ramp from rest into primitive {a_p}")))?;
        ids.push(ramp.id);
    }
    let middle = ids.len() + 1;
    ids.extend([a_p, a_i, a_n]);
    let last = &primitives[a_n];
    if !last.x_f.is_at_rest() {
        let ramp = find_primitive(primitives, |q| q.x_f.is_at_rest() && q.x_i.velocity == last.x_f.velocity)
            .ok_or_else(|| Error::IncompatiblePlan(format!("no ramp to rest after primitive {a_n}")))?;
        ids.push(ramp.id);
    }
    let plan = Plan::new(0.0, State::at_rest([0.0; 3]), ids);
    plan.validate(primitives)?;
    Ok((plan, middle))
}

/// Simulate a triplet from rest and keep the middle primitive's trace.
pub fn execute_triplet(
    triplet: [usize; 3],
    primitives: &[MotionPrimitive],
    config: &SimConfig,
    faults: &[FaultSpec],
) -> Result<ExecutionTrace> {
    let (plan, middle) = augment_triplet(triplet, primitives)?;
    let mut exec = execute(&plan, primitives, config, faults)?;
    let mut trace = exec.traces.swap_remove(middle);
    trace.triplet = triplet.map(Some);
    Ok(trace)
}

/// Start time of the middle primitive of an augmented triplet plan.
pub fn middle_start(triplet: [usize; 3], primitives: &[MotionPrimitive]) -> Result<f64> {
    let (plan, middle) = augment_triplet(triplet, primitives)?;
    Ok(plan.segment_offsets(primitives)?[middle].0 - plan.t_s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectOptions {
    pub triplets_per_primitive: usize,
    /// Cycle through the distinct triplets when a primitive has fewer than
    /// requested instead of failing.
    pub reuse_triplets: bool,
}

/// Chosen triplets for one primitive, in execution order.
pub fn select_triplets(
    primitive_id: usize,
    primitives: &[MotionPrimitive],
    options: &CollectOptions,
    master_seed: u64,
) -> Result<Vec<[usize; 3]>> {
    let mut all = valid_triplets(primitive_id, primitives)?;
    let requested = options.triplets_per_primitive;
    if requested > all.len() && (!options.reuse_triplets || all.is_empty()) {
        return Err(Error::NotEnoughTriplets { primitive_id, available: all.len(), requested });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(master_seed, &[primitive_id as u64, u64::MAX]));
    all.shuffle(&mut rng);
    Ok((0..requested).map(|k| all[k % all.len()]).collect())
}

/// Execute `triplets_per_primitive` triplets for every primitive in
/// `primitive_ids`. Output order is `(primitive, triplet index)`, so each
/// primitive's first traces come first regardless of scheduling.
pub fn collect_triplets(
    primitive_ids: &[usize],
    options: &CollectOptions,
    config: &SimConfig,
    primitives: &[MotionPrimitive],
) -> Result<Vec<(usize, Vec<ExecutionTrace>)>> {
    let jobs: Vec<(usize, usize, [usize; 3])> = primitive_ids
        .iter()
        .map(|&id| select_triplets(id, primitives, options, config.seed).map(|ts| (id, ts)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(id, ts)| ts.into_iter().enumerate().map(move |(k, t)| (id, k, t)))
        .collect();
    let traces: Vec<ExecutionTrace> = jobs
        .par_iter()
        .map(|&(id, k, triplet)| {
            let cfg = config.with_seed(seed::mix(config.seed, &[id as u64, k as u64]));
            execute_triplet(triplet, primitives, &cfg, &[])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<(usize, Vec<ExecutionTrace>)> = primitive_ids.iter().map(|&id| (id, Vec::new())).collect();
    for ((id, _, _), trace) in jobs.iter().zip(traces) {
        let slot = out.iter_mut().find(|(pid, _)| pid == id).expect("primitive listed");
        slot.1.push(trace);
    }
    Ok(out)
}
