use serde::{Deserialize, Serialize};

use super::{add3, norm3, sub3, MotionPrimitive, State, Vec3};
use crate::error::{Error, Result};

/// A lattice plan: start time, world-frame start state and primitive sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    #[serde(rename = "t_S")]
    pub t_s: f64,
    #[serde(rename = "x_I")]
    pub x_i: State,
    pub primitive_ids: Vec<usize>,
}

/// Plan file contents: the plan plus its cost and end time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    #[serde(rename = "t_S")]
    pub t_s: f64,
    #[serde(rename = "x_I")]
    pub x_i: State,
    pub primitive_ids: Vec<usize>,
    pub cost: f64,
    #[serde(rename = "t_G")]
    pub t_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: State,
    pub control: Vec3,
}

fn lookup(primitives: &[MotionPrimitive], id: usize) -> Result<&MotionPrimitive> {
    primitives.get(id).filter(|p| p.id == id).ok_or(Error::UnknownPrimitive(id))
}

impl Plan {
    pub fn new(t_s: f64, x_i: State, primitive_ids: Vec<usize>) -> Self {
        Self { t_s, x_i, primitive_ids }
    }

    /// Check the velocity-continuity condition between the start state and
    /// every consecutive pair of primitives.
    pub fn validate(&self, primitives: &[MotionPrimitive]) -> Result<()> {
        let mut prev: Option<&MotionPrimitive> = None;
        for &id in &self.primitive_ids {
            let prim = lookup(primitives, id)?;
            match prev {
                None => {
                    if norm3(sub3(prim.x_i.velocity, self.x_i.velocity)) > 1e-9 {
                        return Err(Error::IncompatiblePlan(format!(
                            "primitive {id} does not start at the plan's initial velocity"
                        )));
                    }
                }
                Some(p) => {
                    if !p.connects_to(prim) {
                        return Err(Error::IncompatiblePlan(format!(
                            "primitive {} ends at a different velocity than {id} starts",
                            p.id
                        )));
                    }
                }
            }
            prev = Some(prim);
        }
        Ok(())
    }

    pub fn duration(&self, primitives: &[MotionPrimitive]) -> Result<f64> {
        self.primitive_ids
            .iter()
            .map(|&id| lookup(primitives, id).map(|p| p.t_f))
            .sum()
    }

    pub fn end_time(&self, primitives: &[MotionPrimitive]) -> Result<f64> {
        Ok(self.t_s + self.duration(primitives)?)
    }

    pub fn cost(&self, primitives: &[MotionPrimitive]) -> Result<f64> {
        self.primitive_ids
            .iter()
            .map(|&id| lookup(primitives, id).map(|p| p.cost))
            .sum()
    }

    /// Start time and world-frame position offset of every primitive in the plan.
    pub fn segment_offsets(&self, primitives: &[MotionPrimitive]) -> Result<Vec<(f64, Vec3)>> {
        let mut t = self.t_s;
        let mut offset = self.x_i.position;
        let mut out = Vec::with_capacity(self.primitive_ids.len());
        for &id in &self.primitive_ids {
            let prim = lookup(primitives, id)?;
            out.push((t, offset));
            t += prim.t_f;
            offset = add3(offset, prim.x_f.position);
        }
        Ok(out)
    }

    pub fn output(&self, primitives: &[MotionPrimitive]) -> Result<PlanOutput> {
        Ok(PlanOutput {
            t_s: self.t_s,
            x_i: self.x_i,
            primitive_ids: self.primitive_ids.clone(),
            cost: self.cost(primitives)?,
            t_g: self.end_time(primitives)?,
        })
    }
}

/// Spatio-temporal concatenation of a plan into a world-frame reference.
///
/// Junction samples are shared: each segment after the first drops its first
/// sample in favor of the predecessor's last one, which has the same time,
/// position and velocity.
pub fn concatenate(plan: &Plan, primitives: &[MotionPrimitive]) -> Result<Vec<TrajectorySample>> {
    plan.validate(primitives)?;
    if plan.primitive_ids.is_empty() {
        return Ok(vec![TrajectorySample { t: plan.t_s, state: plan.x_i, control: [0.0; 3] }]);
    }
    let mut out = Vec::new();
    for (n, (&id, (t0, offset))) in plan
        .primitive_ids
        .iter()
        .zip(plan.segment_offsets(primitives)?)
        .enumerate()
    {
        let prim = lookup(primitives, id)?;
        let skip = usize::from(n > 0);
        if let Some(last) = out.last_mut() {
            // The successor's control takes over at the junction.
            let last: &mut TrajectorySample = last;
            last.control = prim.reference[0].control;
        }
        out.extend(prim.reference.iter().skip(skip).map(|s| TrajectorySample {
            t: t0 + s.t,
            state: s.state.translated(offset),
            control: s.control,
        }));
    }
    Ok(out)
}

/// All triplets `(a_p, a_i, a_n)` that form a valid three-primitive plan.
pub fn valid_triplets(a_i: usize, primitives: &[MotionPrimitive]) -> Result<Vec<[usize; 3]>> {
    let mid = lookup(primitives, a_i)?;
    let preds: Vec<usize> = primitives.iter().filter(|p| p.connects_to(mid)).map(|p| p.id).collect();
    let succs: Vec<usize> = primitives.iter().filter(|n| mid.connects_to(n)).map(|n| n.id).collect();
    let mut out = Vec::with_capacity(preds.len() * succs.len());
    for &p in &preds {
        for &n in &succs {
            out.push([p, a_i, n]);
        }
    }
    Ok(out)
}
