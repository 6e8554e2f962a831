use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lattice::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] && p[d] <= self.max[d])
    }
}

/// A sphere whose center moves piecewise linearly between keyframes
/// `[t, x, y, z]` and stays put outside the keyframe span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub radius: f64,
    pub keyframes: Vec<[f64; 4]>,
}

impl Obstacle {
    pub fn fixed(center: Vec3, radius: f64) -> Self {
        Self { radius, keyframes: vec![[0.0, center[0], center[1], center[2]]] }
    }

    pub fn center_at(&self, t: f64) -> Vec3 {
        let k = &self.keyframes;
        let at = |i: usize| [k[i][1], k[i][2], k[i][3]];
        if t <= k[0][0] {
            return at(0);
        }
        let last = k.len() - 1;
        if t >= k[last][0] {
            return at(last);
        }
        let i = k.partition_point(|f| f[0] <= t) - 1;
        let w = (t - k[i][0]) / (k[i + 1][0] - k[i][0]);
        let (a, b) = (at(i), at(i + 1));
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2])]
    }

    pub fn is_static(&self) -> bool {
        self.keyframes.windows(2).all(|w| w[0][1..] == w[1][1..])
    }

    /// Fastest keyframe-to-keyframe speed.
    pub fn max_speed(&self) -> f64 {
        self.keyframes
            .windows(2)
            .map(|w| {
                let d: f64 = (1..4).map(|i| (w[1][i] - w[0][i]).powi(2)).sum::<f64>().sqrt();
                d / (w[1][0] - w[0][0])
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyWorld {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl OccupancyWorld {
    pub fn empty(bounds: Bounds) -> Self {
        Self { bounds, obstacles: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if (0..3).any(|d| !(self.bounds.min[d] <= self.bounds.max[d])) {
            return Err(Error::InvalidConfig("world bounds must satisfy min <= max".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite()) {
                return Err(Error::InvalidConfig(format!("obstacle {i} needs a positive radius")));
            }
            if o.keyframes.is_empty() || o.keyframes.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("obstacle {i} needs finite keyframes")));
            }
            if o.keyframes.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidConfig(format!("obstacle {i} keyframe times must increase")));
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.obstacles.iter().all(Obstacle::is_static)
    }

    pub fn max_obstacle_speed(&self) -> f64 {
        self.obstacles.iter().map(Obstacle::max_speed).fold(0.0, f64::max)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let w: Self = io::read_json(path)?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<bool> {
        io::write_json_atomic(path, self)
    }
}
