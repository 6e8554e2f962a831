use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatticeConfig, State, Vec3};
use crate::error::{Error, Result};
use crate::io;

/// One reference sample: time, state and feedforward control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 10]", into = "[f64; 10]")]
pub struct ReferenceSample {
    pub t: f64,
    pub state: State,
    pub control: Vec3,
}

impl From<[f64; 10]> for ReferenceSample {
    fn from(r: [f64; 10]) -> Self {
        Self {
            t: r[0],
            state: State::new([r[1], r[2], r[3]], [r[4], r[5], r[6]]),
            control: [r[7], r[8], r[9]],
        }
    }
}

impl From<ReferenceSample> for [f64; 10] {
    fn from(s: ReferenceSample) -> Self {
        let p = s.state.position;
        let v = s.state.velocity;
        let u = s.control;
        [s.t, p[0], p[1], p[2], v[0], v[1], v[2], u[0], u[1], u[2]]
    }
}

/// A translation-invariant reference trajectory between two lattice states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub id: usize,
    #[serde(rename = "x_I")]
    pub x_i: State,
    #[serde(rename = "x_F")]
    pub x_f: State,
    #[serde(rename = "t_F")]
    pub t_f: f64,
    pub dt_ref: f64,
    pub reference: Vec<ReferenceSample>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    RestToRest,
    RestToMoving,
    MovingToRest,
    MovingToMoving,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::RestToRest,
        Family::RestToMoving,
        Family::MovingToRest,
        Family::MovingToMoving,
    ];
}

impl MotionPrimitive {
    pub fn family(&self) -> Family {
        match (self.x_i.is_at_rest(), self.x_f.is_at_rest()) {
            (true, true) => Family::RestToRest,
            (true, false) => Family::RestToMoving,
            (false, true) => Family::MovingToRest,
            (false, false) => Family::MovingToMoving,
        }
    }

    /// Reference state and control at `tau`, clamped to `[0, t_F]`.
    ///
    /// Positions use cubic Hermite interpolation on the sampled positions and
    /// velocities, controls are interpolated linearly. Both are exact for the
    /// cubic primitives produced by [`generate_primitive`].
    pub fn sample_at(&self, tau: f64) -> (State, Vec3) {
        let n = self.reference.len();
        if n == 1 {
            return (self.reference[0].state, self.reference[0].control);
        }
        let tau = tau.clamp(0.0, self.t_f);
        let k = ((tau / self.dt_ref).floor() as usize).min(n - 2);
        let a = &self.reference[k];
        let b = &self.reference[k + 1];
        let h = b.t - a.t;
        let s = ((tau - a.t) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        let mut ctl = [0.0; 3];
        for d in 0..3 {
            let (p0, p1) = (a.state.position[d], b.state.position[d]);
            let (v0, v1) = (a.state.velocity[d], b.state.velocity[d]);
            pos[d] = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1;
            vel[d] = d00 * p0 + d10 * v0 + d01 * p1 + d11 * v1;
            ctl[d] = a.control[d] + s * (b.control[d] - a.control[d]);
        }
        (State::new(pos, vel), ctl)
    }

    pub fn state_at(&self, tau: f64) -> State {
        self.sample_at(tau).0
    }

    /// Exact velocity equality of this primitive's end with `next`'s start.
    pub fn connects_to(&self, next: &MotionPrimitive) -> bool {
        self.x_f.velocity == next.x_i.velocity
    }
}

/// Per-axis cubic `p(t) = c0 + c1 t + c2 t^2 + c3 t^3` matching position and
/// velocity at both ends of `[0, t_f]`.
fn cubic_coefficients(p0: f64, v0: f64, p1: f64, v1: f64, t_f: f64) -> [f64; 4] {
    let dp = p1 - p0;
    let c2 = (3.0 * dp - (2.0 * v0 + v1) * t_f) / (t_f * t_f);
    let c3 = (-2.0 * dp + (v0 + v1) * t_f) / (t_f * t_f * t_f);
    [p0, v0, c2, c3]
}

/// Generate the cubic boundary-value primitive from `x_i` to `x_f` with the
/// configured duration. The returned primitive has id 0.
pub fn generate_primitive(x_i: &State, x_f: &State, config: &LatticeConfig) -> Result<MotionPrimitive> {
    config.validate()?;
    if x_i.position != [0.0; 3] {
        return Err(Error::InvalidBoundary("initial position must be the origin".into()));
    }
    if !config.is_on_lattice(x_i) {
        return Err(Error::InvalidBoundary("initial velocity not in the lattice velocity set".into()));
    }
    if !config.is_on_lattice(x_f) {
        return Err(Error::InvalidBoundary("final state is not on the lattice".into()));
    }
    if x_i.is_at_rest() && x_f.is_at_rest() && x_f.position == x_i.position {
        return Err(Error::DegeneratePrimitive);
    }

    let t_f = config.primitive_duration;
    let steps = config.reference_steps();
    let coeffs: [[f64; 4]; 3] = std::array::from_fn(|d| {
        cubic_coefficients(x_i.position[d], x_i.velocity[d], x_f.position[d], x_f.velocity[d], t_f)
    });

    let mut reference = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = if k == steps { t_f } else { k as f64 * config.dt_ref };
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3];
        let mut ctl = [0.0; 3];
        for d in 0..3 {
            let [c0, c1, c2, c3] = coeffs[d];
            pos[d] = c0 + t * (c1 + t * (c2 + t * c3));
            vel[d] = c1 + t * (2.0 * c2 + 3.0 * c3 * t);
            ctl[d] = 2.0 * c2 + 6.0 * c3 * t;
        }
        let sample = ReferenceSample { t, state: State::new(pos, vel), control: ctl };
        if let Some(d) = (0..3).find(|&d| vel[d].abs() > config.v_max) {
            return Err(Error::InfeasiblePrimitive(format!(
                "|v_{d}| = {:.3} exceeds v_max {} at t = {t:.3}",
                vel[d].abs(),
                config.v_max
            )));
        }
        if let Some(d) = (0..3).find(|&d| ctl[d].abs() > config.u_max) {
            return Err(Error::InfeasiblePrimitive(format!(
                "|u_{d}| = {:.3} exceeds u_max {} at t = {t:.3}",
                ctl[d].abs(),
                config.u_max
            )));
        }
        if !sample.state.is_finite() {
            return Err(Error::InfeasiblePrimitive("non-finite reference".into()));
        }
        reference.push(sample);
    }

    let cost = trapezoid_cost(&reference, config.time_weight);
    Ok(MotionPrimitive {
        id: 0,
        x_i: *x_i,
        x_f: *x_f,
        t_f,
        dt_ref: config.dt_ref,
        reference,
        cost,
    })
}

/// `integral (|u|^2 + time_weight) dt` by the trapezoidal rule over the samples.
fn trapezoid_cost(reference: &[ReferenceSample], time_weight: f64) -> f64 {
    let running = |s: &ReferenceSample| s.control.iter().map(|u| u * u).sum::<f64>() + time_weight;
    reference
        .windows(2)
        .map(|w| 0.5 * (running(&w[0]) + running(&w[1])) * (w[1].t - w[0].t))
        .sum()
}

/// All primitives of the four boundary families over the lattice elements,
/// with ids assigned by family then lexicographic endpoint direction.
pub fn generate_primitive_set(config: &LatticeConfig) -> Result<Vec<MotionPrimitive>> {
    config.validate()?;
    let dirs = config.moving_directions();
    let mut out = Vec::with_capacity(4 * dirs.len());
    for family in Family::ALL {
        for &dir in &dirs {
            let p = config.position_for(dir);
            let v = config.velocity_for(dir);
            let (x_i, x_f) = match family {
                Family::RestToRest => (State::at_rest([0.0; 3]), State::at_rest(p)),
                Family::RestToMoving => (State::at_rest([0.0; 3]), State::new(p, v)),
                Family::MovingToRest => (State::new([0.0; 3], v), State::at_rest(p)),
                Family::MovingToMoving => (State::new([0.0; 3], v), State::new(p, v)),
            };
            let mut prim = generate_primitive(&x_i, &x_f, config)?;
            prim.id = out.len();
            out.push(prim);
        }
    }
    Ok(out)
}

/// On-disk primitive set: `{config, primitives}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSetFile {
    pub config: LatticeConfig,
    pub primitives: Vec<MotionPrimitive>,
}

impl PrimitiveSetFile {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<bool> {
        io::write_json_atomic(path, self)
    }
}
