use std::collections::BTreeMap;
use std::sync::Arc;

use crate::lattice::{MotionPrimitive, Vec3};
use crate::model::{BaselineMargins, MarginKind, PrimitiveExecutionModel};
use crate::special::chi2_quantile;

/// Axis-aligned safety margin around a reference position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// Shift of the ellipsoid center from the reference position.
    pub offset: Vec3,
    pub semi_axes: Vec3,
}

impl Margin {
    pub const ZERO: Margin = Margin { offset: [0.0; 3], semi_axes: [0.0; 3] };
}

/// Evaluates the control margin of a primitive at any time along it.
#[derive(Debug, Clone)]
pub struct MarginProvider {
    /// `None` plans with no control margin.
    pub kind: Option<MarginKind>,
    pub p: f64,
    quantile: f64,
    models: Arc<BTreeMap<usize, PrimitiveExecutionModel>>,
    baselines: Option<Arc<BaselineMargins>>,
}

fn max_position(var: &[f64]) -> f64 {
    var[..3].iter().copied().fold(0.0, f64::max)
}

impl MarginProvider {
    pub fn none() -> Self {
        Self { kind: None, p: 0.0, quantile: 0.0, models: Arc::default(), baselines: None }
    }

    /// Margins at probability `p` over the three positional dimensions.
    pub fn new(
        kind: MarginKind,
        p: f64,
        models: Arc<BTreeMap<usize, PrimitiveExecutionModel>>,
        baselines: Option<Arc<BaselineMargins>>,
    ) -> Self {
        Self { kind: Some(kind), p, quantile: chi2_quantile(p, 3), models, baselines }
    }

    fn sphere(&self, var: f64) -> Margin {
        let r = (var * self.quantile).sqrt();
        Margin { offset: [0.0; 3], semi_axes: [r; 3] }
    }

    fn global(&self) -> Margin {
        self.baselines.as_ref().map_or(Margin::ZERO, |b| self.sphere(max_position(&b.global)))
    }

    /// Margin of primitive `prim` at `tau`. Kinds whose data is missing for
    /// this primitive fall back to the global sphere.
    pub fn margin(&self, prim: &MotionPrimitive, tau: f64) -> Margin {
        let Some(kind) = self.kind else {
            return Margin::ZERO;
        };
        let baselines = self.baselines.as_deref();
        match kind {
            MarginKind::GlobalSphere => self.global(),
            MarginKind::PerPrimitiveSphere => baselines
                .and_then(|b| b.per_primitive.get(&prim.id))
                .map_or_else(|| self.global(), |v| self.sphere(max_position(v))),
            MarginKind::TimeVaryingSphere => baselines
                .and_then(|b| b.time_varying_at(prim.id, tau))
                .map_or_else(|| self.global(), |v| self.sphere(max_position(&v))),
            MarginKind::LearnedModel => match self.models.get(&prim.id) {
                Some(m) => {
                    let (mu, var) = m.at(tau);
                    let r = prim.state_at(tau).position;
                    Margin {
                        offset: [mu[0] - r[0], mu[1] - r[1], mu[2] - r[2]],
                        semi_axes: [0, 1, 2].map(|d| (var[d] * self.quantile).sqrt()),
                    }
                }
                None => self.global(),
            },
        }
    }
}
