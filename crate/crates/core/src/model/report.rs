use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use super::{BaselineMargins, ExecutionTrace, MarginKind, PrimitiveExecutionModel};
use crate::error::{Error, Result};
use crate::lattice::MotionPrimitive;
use crate::special::chi2_quantile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmseRow {
    pub mean: f64,
    pub std: f64,
}

impl RmseRow {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Positional RMSE in meters, aggregated per primitive then summarized
/// across primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub obs_vs_reference: RmseRow,
    pub obs_vs_model_mean: RmseRow,
    pub reference_vs_model_mean: RmseRow,
    /// `(primitive id, [obs vs reference, obs vs model, reference vs model])`
    pub per_primitive: Vec<(usize, [f64; 3])>,
}

fn dist3(a: &[f64], b: &[f64]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt()
}

fn rms(errors: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = errors.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

pub fn rmse_report(
    models: &BTreeMap<usize, PrimitiveExecutionModel>,
    traces: &[ExecutionTrace],
    primitives: &[MotionPrimitive],
) -> Result<RmseReport> {
    let mut by_primitive: BTreeMap<usize, Vec<&ExecutionTrace>> = BTreeMap::new();
    for tr in traces {
        by_primitive.entry(tr.primitive_id).or_default().push(tr);
    }
    let mut per_primitive = Vec::new();
    for (id, trs) in by_primitive {
        let (Some(model), Some(prim)) = (models.get(&id), primitives.get(id)) else {
            continue;
        };
        let samples = || trs.iter().flat_map(|t| t.samples.iter());
        let obs_ref = rms(samples().map(|s| dist3(&s.state.position, &prim.state_at(s.tau).position)));
        let obs_model = rms(samples().map(|s| dist3(&s.state.position, &model.at(s.tau).0)));
        let ref_model = rms(model.grid().iter().enumerate().map(|(k, &tau)| {
            dist3(&prim.state_at(tau).position, &model.at_index(k).0)
        }));
        per_primitive.push((id, [obs_ref, obs_model, ref_model]));
    }
    if per_primitive.is_empty() {
        return Err(Error::InsufficientData("no held-out traces with a matching model".into()));
    }
    let column = |c: usize| RmseRow::from_values(&per_primitive.iter().map(|(_, v)| v[c]).collect::<Vec<_>>());
    Ok(RmseReport {
        obs_vs_reference: column(0),
        obs_vs_model_mean: column(1),
        reference_vs_model_mean: column(2),
        per_primitive,
    })
}

impl RmseReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("comparison,mean_m,std_m\n");
        for (name, row) in [
            ("observed_vs_reference", &self.obs_vs_reference),
            ("observed_vs_model_mean", &self.obs_vs_model_mean),
            ("reference_vs_model_mean", &self.reference_vs_model_mean),
        ] {
            let _ = writeln!(s, "{name},{:.6},{:.6}", row.mean, row.std);
        }
        s
    }
}

/// Average normalized ellipse area per margin kind.
#[derive(Debug, Clone, PartialEq)]
pub struct AreaReport {
    pub p: f64,
    /// Raw average areas in square meters.
    pub raw: Vec<(MarginKind, f64)>,
}

impl AreaReport {
    pub fn normalized(&self, kind: MarginKind) -> f64 {
        let global = self.raw_area(MarginKind::GlobalSphere);
        self.raw_area(kind) / global
    }

    pub fn raw_area(&self, kind: MarginKind) -> f64 {
        self.raw.iter().find(|(k, _)| *k == kind).map_or(f64::NAN, |(_, a)| *a)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("margin,normalized_area,area_m2\n");
        for (kind, area) in &self.raw {
            let _ = writeln!(s, "{},{:.6},{:.9}", kind.label(), self.normalized(*kind), area);
        }
        s
    }
}

/// Mean of the axis-pair ellipse areas `pi * a_i * a_j` for per-axis
/// positional variances scaled to probability `p` per axis.
pub fn mean_pair_area(var: [f64; 3], p: f64) -> f64 {
    let q = chi2_quantile(p, 1);
    let a: Vec<f64> = var.iter().map(|v| (v * q).sqrt()).collect();
    PI * (a[0] * a[1] + a[0] * a[2] + a[1] * a[2]) / 3.0
}

fn sphere(values: &[f64]) -> [f64; 3] {
    let m = values[..3].iter().copied().fold(0.0, f64::max);
    [m; 3]
}

pub fn area_report(
    models: &BTreeMap<usize, PrimitiveExecutionModel>,
    baselines: &BaselineMargins,
    p: f64,
) -> Result<AreaReport> {
    let mut sums = [0.0; 4];
    let mut count = 0usize;
    for (id, model) in models {
        let (Some(per_prim), Some(tv)) = (baselines.per_primitive.get(id), baselines.time_varying.get(id)) else {
            continue;
        };
        if tv.len() != model.len() {
            return Err(Error::InsufficientData(format!("baseline grid of primitive {id} differs from its model")));
        }
        for (k, tv_k) in tv.iter().enumerate() {
            let (_, var) = model.at_index(k);
            let per_kind = [
                sphere(&baselines.global),
                sphere(per_prim),
                sphere(tv_k),
                [var[0], var[1], var[2]],
            ];
            for (s, v) in sums.iter_mut().zip(per_kind) {
                *s += mean_pair_area(v, p);
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("no primitive has both a model and baselines".into()));
    }
    Ok(AreaReport {
        p,
        raw: MarginKind::ALL.iter().zip(sums).map(|(k, s)| (*k, s / count as f64)).collect(),
    })
}
