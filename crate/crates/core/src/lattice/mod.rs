//! State lattice: robot states, lattice configuration, motion primitives and
//! plan concatenation.
//!
//! The robot is a 3D double integrator. A state is position plus velocity;
//! lattice states have positions on a regular grid and velocities drawn from
//! a finite set of directions scaled by the nominal speed.

mod plan;
mod primitive;

pub use plan::{concatenate, valid_triplets, Plan, PlanOutput, TrajectorySample};
pub use primitive::{
    generate_primitive, generate_primitive_set, Family, MotionPrimitive, PrimitiveSetFile,
    ReferenceSample,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Number of state dimensions (3 position + 3 velocity).
pub const STATE_DIM: usize = 6;

const LATTICE_TOL: f64 = 1e-9;

pub(crate) fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm3(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl State {
    pub fn new(position: Vec3, velocity: Vec3) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec3) -> Self {
        Self::new(position, [0.0; 3])
    }

    pub fn from_array(x: [f64; STATE_DIM]) -> Self {
        Self::new([x[0], x[1], x[2]], [x[3], x[4], x[5]])
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        let p = self.position;
        let v = self.velocity;
        [p[0], p[1], p[2], v[0], v[1], v[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn is_at_rest(&self) -> bool {
        self.velocity == [0.0; 3]
    }

    pub fn translated(&self, offset: Vec3) -> Self {
        Self::new(add3(self.position, offset), self.velocity)
    }

    /// Per-dimension bound check: `|p_d| <= p_max`, `|v_d| <= v_max`.
    pub fn within_bounds(&self, p_max: f64, v_max: f64) -> bool {
        self.is_finite()
            && self.position.iter().all(|p| p.abs() <= p_max)
            && self.velocity.iter().all(|v| v.abs() <= v_max)
    }
}

/// Lattice discretization and primitive generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    /// Grid spacing of lattice positions, meters.
    pub position_resolution: f64,
    /// Integer direction generators `p` in `{-1, 0, 1}^3`. Each nonzero `p`
    /// yields the lattice element `(p * resolution, p / |p| * nominal_speed)`.
    pub velocity_directions: Vec<[i8; 3]>,
    pub nominal_speed: f64,
    pub v_max: f64,
    /// Control bound, m/s^2.
    pub u_max: f64,
    pub primitive_duration: f64,
    /// Reference sample spacing, seconds.
    pub dt_ref: f64,
    /// Weight of the time term in the running cost `|u|^2 + time_weight`.
    pub time_weight: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            position_resolution: 1.0,
            velocity_directions: all_directions(),
            nominal_speed: 1.0,
            v_max: 2.0,
            u_max: 5.0,
            primitive_duration: 2.0,
            dt_ref: 0.02,
            time_weight: 1.0,
        }
    }
}

/// `{-1, 0, 1}^3` in lexicographic order, zero included.
pub fn all_directions() -> Vec<[i8; 3]> {
    let mut out = Vec::with_capacity(27);
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                out.push([x, y, z]);
            }
        }
    }
    out
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("position_resolution", self.position_resolution),
            ("nominal_speed", self.nominal_speed),
            ("v_max", self.v_max),
            ("u_max", self.u_max),
            ("primitive_duration", self.primitive_duration),
            ("dt_ref", self.dt_ref),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.time_weight >= 0.0 && self.time_weight.is_finite()) {
            return Err(Error::InvalidConfig("time_weight must be non-negative".into()));
        }
        if self.velocity_directions.iter().flatten().any(|c| c.abs() > 1) {
            return Err(Error::InvalidConfig(
                "velocity direction components must be in {-1, 0, 1}".into(),
            ));
        }
        let steps = self.primitive_duration / self.dt_ref;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "primitive_duration must be an integer multiple of dt_ref".into(),
            ));
        }
        Ok(())
    }

    pub fn velocity_for(&self, dir: [i8; 3]) -> Vec3 {
        let p = dir.map(f64::from);
        let n = norm3(p);
        if n == 0.0 {
            return [0.0; 3];
        }
        p.map(|c| c / n * self.nominal_speed)
    }

    pub fn position_for(&self, dir: [i8; 3]) -> Vec3 {
        dir.map(|c| f64::from(c) * self.position_resolution)
    }

    /// Nonzero direction generators, sorted and deduplicated.
    pub fn moving_directions(&self) -> Vec<[i8; 3]> {
        let mut dirs: Vec<[i8; 3]> = self
            .velocity_directions
            .iter()
            .copied()
            .filter(|d| *d != [0, 0, 0])
            .collect();
        dirs.sort();
        dirs.dedup();
        dirs
    }

    /// Lattice velocity key for a velocity, if it is one of the allowed
    /// velocities (zero is always allowed).
    pub fn velocity_key(&self, velocity: Vec3) -> Option<[i8; 3]> {
        if norm3(velocity) <= LATTICE_TOL {
            return Some([0, 0, 0]);
        }
        self.moving_directions()
            .into_iter()
            .find(|d| norm3(sub3(self.velocity_for(*d), velocity)) <= LATTICE_TOL)
    }

    /// Integer lattice index of a position, if it lies on the grid.
    pub fn position_key(&self, position: Vec3) -> Option<[i64; 3]> {
        let mut key = [0i64; 3];
        for (k, p) in key.iter_mut().zip(position) {
            let scaled = p / self.position_resolution;
            let r = scaled.round();
            if (scaled - r).abs() > LATTICE_TOL || !r.is_finite() {
                return None;
            }
            *k = r as i64;
        }
        Some(key)
    }

    pub fn is_on_lattice(&self, state: &State) -> bool {
        self.position_key(state.position).is_some() && self.velocity_key(state.velocity).is_some()
    }

    pub fn reference_steps(&self) -> usize {
        (self.primitive_duration / self.dt_ref).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_directions_are_unit_scaled() {
        let cfg = LatticeConfig::default();
        assert_eq!(cfg.moving_directions().len(), 26);
        for d in cfg.moving_directions() {
            let v = cfg.velocity_for(d);
            assert!((norm3(v) - cfg.nominal_speed).abs() < 1e-15);
            assert_eq!(cfg.velocity_key(v), Some(d));
        }
        assert_eq!(cfg.velocity_key([0.0; 3]), Some([0, 0, 0]));
        assert_eq!(cfg.velocity_key([0.3, 0.0, 0.0]), None);
    }

    #[test]
    fn lattice_membership() {
        let cfg = LatticeConfig::default();
        assert!(cfg.is_on_lattice(&State::at_rest([1.0, -2.0, 3.0])));
        assert!(!cfg.is_on_lattice(&State::at_rest([0.5, 0.0, 0.0])));
        assert_eq!(cfg.position_key([2.0, 0.0, -1.0]), Some([2, 0, -1]));
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = LatticeConfig::default();
        cfg.position_resolution = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LatticeConfig::default();
        cfg.dt_ref = 0.03;
        assert!(cfg.validate().is_err());
        assert!(LatticeConfig::default().validate().is_ok());
    }
}
