//! Per-primitive execution models learned from traces: GP alignment onto a
//! shared time grid, moment matching, baseline margins and evaluation
//! reports.

mod report;
mod trace;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use report::{area_report, mean_pair_area, rmse_report, AreaReport, RmseReport, RmseRow};
pub use trace::{ExecutionTrace, TraceRecord, TraceSample, Triplet};

use crate::error::{Error, Result};
use crate::gp::{self, GpModel, Hyperparams};
use crate::io;
use crate::lattice::{MotionPrimitive, STATE_DIM};
use crate::special::chi2_quantile;

pub const DEFAULT_DT_MODEL: f64 = 0.05;

/// The kinds of safety margin compared in the evaluation, from the most to
/// the least conservative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    GlobalSphere,
    PerPrimitiveSphere,
    TimeVaryingSphere,
    LearnedModel,
}

impl MarginKind {
    pub const ALL: [MarginKind; 4] = [
        MarginKind::GlobalSphere,
        MarginKind::PerPrimitiveSphere,
        MarginKind::TimeVaryingSphere,
        MarginKind::LearnedModel,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MarginKind::GlobalSphere => "global_sphere",
            MarginKind::PerPrimitiveSphere => "per_primitive_sphere",
            MarginKind::TimeVaryingSphere => "time_varying_sphere",
            MarginKind::LearnedModel => "learned_model",
        }
    }
}

impl std::str::FromStr for MarginKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MarginKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown margin kind '{s}'")))
    }
}

/// Grid times `k * dt_model` covering `[0, t_f]`.
pub fn model_grid(t_f: f64, dt_model: f64) -> Vec<f64> {
    let n = (t_f / dt_model - 1e-9).ceil().max(0.0) as usize;
    (0..=n).map(|k| k as f64 * dt_model).collect()
}

fn interp_index(len: usize, dt: f64, tau: f64) -> (usize, usize, f64) {
    let x = (tau / dt).clamp(0.0, (len - 1) as f64);
    let lo = (x.floor() as usize).min(len - 1);
    let hi = (lo + 1).min(len - 1);
    (lo, hi, x - lo as f64)
}

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + w * (b - a)
}

/// Starting hyperparameters for fitting a residual series.
pub fn initial_hyperparams(times: &[f64], residual: &[f64]) -> Hyperparams {
    let n = residual.len().max(1) as f64;
    let mean = residual.iter().sum::<f64>() / n;
    let var = residual.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let signal = var.max(1e-10);
    let span = match (times.first(), times.last()) {
        (Some(a), Some(b)) if b > a => b - a,
        _ => 1.0,
    };
    Hyperparams::new(signal, span / 8.0, 0.1 * signal)
}

/// Fit one GP per state dimension to the trace's residual from the
/// primitive reference.
pub fn fit_trace(trace: &ExecutionTrace, prim: &MotionPrimitive) -> Result<Vec<GpModel>> {
    trace.validate(prim.t_f)?;
    let taus = trace.taus();
    let refs: Vec<[f64; STATE_DIM]> = taus.iter().map(|&t| prim.state_at(t).to_array()).collect();
    (0..STATE_DIM)
        .map(|d| {
            let residual: Vec<f64> = trace
                .samples
                .iter()
                .zip(&refs)
                .map(|(s, r)| s.state.to_array()[d] - r[d])
                .collect();
            gp::fit(&taus, &residual, initial_hyperparams(&taus, &residual))
        })
        .collect()
}

/// One execution's GP posterior evaluated on the model grid, reference
/// added back.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedComponent {
    pub mean: Vec<[f64; STATE_DIM]>,
    pub var: Vec<[f64; STATE_DIM]>,
}

pub fn align(gps: &[GpModel], prim: &MotionPrimitive, grid: &[f64]) -> AlignedComponent {
    let mut mean = Vec::with_capacity(grid.len());
    let mut var = Vec::with_capacity(grid.len());
    for &tau in grid {
        let r = prim.state_at(tau).to_array();
        let mut m = [0.0; STATE_DIM];
        let mut v = [0.0; STATE_DIM];
        for d in 0..STATE_DIM {
            let (mu, s2) = gps[d].predict(tau);
            m[d] = r[d] + mu;
            v[d] = s2;
        }
        mean.push(m);
        var.push(v);
    }
    AlignedComponent { mean, var }
}

pub fn align_trace(trace: &ExecutionTrace, prim: &MotionPrimitive, dt_model: f64) -> Result<AlignedComponent> {
    let gps = fit_trace(trace, prim)?;
    Ok(align(&gps, prim, &model_grid(prim.t_f, dt_model)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimSeries {
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

/// Unimodal Gaussian model of a primitive's normal execution over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveExecutionModel {
    pub primitive_id: usize,
    pub dt_model: f64,
    #[serde(rename = "J_i")]
    pub j_i: usize,
    pub per_dim: Vec<DimSeries>,
}

impl PrimitiveExecutionModel {
    pub fn len(&self) -> usize {
        self.per_dim.first().map_or(0, |d| d.mu.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt_model).collect()
    }

    pub fn duration(&self) -> f64 {
        (self.len().max(1) - 1) as f64 * self.dt_model
    }

    /// Mean and variance at grid index `k`.
    pub fn at_index(&self, k: usize) -> ([f64; STATE_DIM], [f64; STATE_DIM]) {
        let mut m = [0.0; STATE_DIM];
        let mut v = [0.0; STATE_DIM];
        for d in 0..STATE_DIM {
            m[d] = self.per_dim[d].mu[k];
            v[d] = self.per_dim[d].var[k];
        }
        (m, v)
    }

    /// Mean and variance at any `tau`, linearly interpolated and clamped to
    /// the grid.
    pub fn at(&self, tau: f64) -> ([f64; STATE_DIM], [f64; STATE_DIM]) {
        let (lo, hi, w) = interp_index(self.len(), self.dt_model, tau);
        let mut m = [0.0; STATE_DIM];
        let mut v = [0.0; STATE_DIM];
        for d in 0..STATE_DIM {
            let s = &self.per_dim[d];
            m[d] = lerp(s.mu[lo], s.mu[hi], w);
            v[d] = lerp(s.var[lo], s.var[hi], w);
        }
        (m, v)
    }

    /// Largest positional variance over the whole model.
    pub fn max_position_variance(&self) -> f64 {
        self.per_dim[..3].iter().flat_map(|d| d.var.iter().copied()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.per_dim.len() != STATE_DIM || n < 2 || self.per_dim.iter().any(|d| d.mu.len() != n || d.var.len() != n) {
            return Err(Error::DegenerateModel(format!("model {} has inconsistent shape", self.primitive_id)));
        }
        if self.dt_model <= 0.0 || !self.dt_model.is_finite() {
            return Err(Error::DegenerateModel(format!("model {} has invalid dt_model", self.primitive_id)));
        }
        if self.per_dim.iter().any(|d| d.var.iter().any(|v| !(*v > 0.0 && v.is_finite()))) {
            return Err(Error::DegenerateModel(format!("model {} has non-positive variance", self.primitive_id)));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<bool> {
        io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = io::read_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

/// Moment-match the equal-weight mixture of aligned components.
pub fn build_model(primitive_id: usize, dt_model: f64, components: &[AlignedComponent]) -> Result<PrimitiveExecutionModel> {
    let j = components.len();
    if j < 2 {
        return Err(Error::InsufficientData(format!("primitive {primitive_id} has {j} components, need 2")));
    }
    let n = components[0].mean.len();
    if components.iter().any(|c| c.mean.len() != n || c.var.len() != n) {
        return Err(Error::InsufficientData("components are on different grids".into()));
    }
    let jf = j as f64;
    let mut per_dim = vec![DimSeries { mu: vec![0.0; n], var: vec![0.0; n] }; STATE_DIM];
    for k in 0..n {
        for (d, series) in per_dim.iter_mut().enumerate() {
            let mu = components.iter().map(|c| c.mean[k][d]).sum::<f64>() / jf;
            // mean(var_j + mu_j^2) - mu^2, arranged to avoid cancellation.
            let var = components
                .iter()
                .map(|c| c.var[k][d] + (c.mean[k][d] - mu).powi(2))
                .sum::<f64>()
                / jf;
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::DegenerateModel(format!(
                    "primitive {primitive_id}: variance {var} at grid point {k}, dimension {d}"
                )));
            }
            series.mu[k] = mu;
            series.var[k] = var;
        }
    }
    Ok(PrimitiveExecutionModel { primitive_id, dt_model, j_i: j, per_dim })
}

/// Axis-aligned ellipsoid with a center and per-axis semi-axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

/// The ellipsoid holding probability `p` of `N(mu, diag(var))` measured
/// with `n_dof` degrees of freedom.
pub fn probability_region(mu: &[f64], var: &[f64], p: f64, n_dof: u32) -> Ellipsoid {
    let q = chi2_quantile(p, n_dof);
    Ellipsoid { center: mu.to_vec(), semi_axes: var.iter().map(|v| (v * q).sqrt()).collect() }
}

pub fn mahalanobis_sq(x: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    x.iter().zip(mu).zip(var).map(|((x, m), v)| (x - m).powi(2) / v).sum()
}

/// Spherical baseline variances, per state dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMargins {
    pub dt_model: f64,
    /// Maximum over all primitives.
    pub global: [f64; STATE_DIM],
    /// Maximum over time, per primitive.
    pub per_primitive: BTreeMap<usize, [f64; STATE_DIM]>,
    /// Per primitive and model grid point.
    pub time_varying: BTreeMap<usize, Vec<[f64; STATE_DIM]>>,
}

impl BaselineMargins {
    pub fn time_varying_at(&self, id: usize, tau: f64) -> Option<[f64; STATE_DIM]> {
        let series = self.time_varying.get(&id)?;
        let (lo, hi, w) = interp_index(series.len(), self.dt_model, tau);
        let mut out = [0.0; STATE_DIM];
        for (d, o) in out.iter_mut().enumerate() {
            *o = lerp(series[lo][d], series[hi][d], w);
        }
        Some(out)
    }

    pub fn save(&self, path: &Path) -> Result<bool> {
        io::write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

/// Sample variance of aligned component means about the reference, then
/// its maxima over time and over primitives.
pub fn compute_baselines(inputs: &[(&MotionPrimitive, &[AlignedComponent])], dt_model: f64) -> Result<BaselineMargins> {
    let mut global = [0.0; STATE_DIM];
    let mut per_primitive = BTreeMap::new();
    let mut time_varying = BTreeMap::new();
    for (prim, comps) in inputs {
        let j = comps.len();
        if j < 2 {
            return Err(Error::InsufficientData(format!("primitive {} has {j} executions, need 2", prim.id)));
        }
        let grid = model_grid(prim.t_f, dt_model);
        if comps.iter().any(|c| c.mean.len() != grid.len()) {
            return Err(Error::InsufficientData(format!("components of primitive {} are off-grid", prim.id)));
        }
        let mut series = Vec::with_capacity(grid.len());
        let mut max_t = [0.0; STATE_DIM];
        for (k, &tau) in grid.iter().enumerate() {
            let r = prim.state_at(tau).to_array();
            let mut v = [0.0; STATE_DIM];
            for d in 0..STATE_DIM {
                v[d] = comps.iter().map(|c| (c.mean[k][d] - r[d]).powi(2)).sum::<f64>() / (j - 1) as f64;
                max_t[d] = f64::max(max_t[d], v[d]);
            }
            series.push(v);
        }
        for d in 0..STATE_DIM {
            global[d] = f64::max(global[d], max_t[d]);
        }
        per_primitive.insert(prim.id, max_t);
        time_varying.insert(prim.id, series);
    }
    Ok(BaselineMargins { dt_model, global, per_primitive, time_varying })
}
