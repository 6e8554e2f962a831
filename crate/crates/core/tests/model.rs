use std::collections::BTreeMap;
use std::f64::consts::PI;

use primguard::lattice::{generate_primitive_set, LatticeConfig, MotionPrimitive, State, STATE_DIM};
use primguard::model::{
    align_trace, area_report, build_model, compute_baselines, model_grid, probability_region, rmse_report,
    mean_pair_area, AlignedComponent, DimSeries, ExecutionTrace, MarginKind, PrimitiveExecutionModel, TraceSample,
};
use proptest::prelude::*;

fn prims() -> Vec<MotionPrimitive> {
    generate_primitive_set(&LatticeConfig::default()).unwrap()
}

fn constant_component(n: usize, mean: [f64; STATE_DIM], var: [f64; STATE_DIM]) -> AlignedComponent {
    AlignedComponent { mean: vec![mean; n], var: vec![var; n] }
}

/// Component whose mean is the primitive reference plus `offset` per dimension.
fn shifted_component(prim: &MotionPrimitive, dt: f64, offset: impl Fn(usize, usize) -> f64) -> AlignedComponent {
    let grid = model_grid(prim.t_f, dt);
    let mean = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut r = prim.state_at(t).to_array();
            for (d, v) in r.iter_mut().enumerate() {
                *v += offset(k, d);
            }
            r
        })
        .collect();
    AlignedComponent { mean, var: vec![[1e-4; STATE_DIM]; grid.len()] }
}

#[test]
fn two_component_mixture_moments() {
    let a = constant_component(3, [0.0; STATE_DIM], [1.0; STATE_DIM]);
    let b = constant_component(3, [2.0; STATE_DIM], [1.0; STATE_DIM]);
    let m = build_model(0, 0.05, &[a.clone(), b]).unwrap();
    let (mu, var) = m.at_index(1);
    assert!(mu.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    assert!(var.iter().all(|&v| (v - 2.0).abs() < 1e-15));
    let same = build_model(0, 0.05, &[a.clone(), a.clone()]).unwrap();
    assert_eq!(same.at_index(2), (a.mean[2], a.var[2]));
}

#[test]
fn single_component_is_rejected() {
    let a = constant_component(3, [0.0; STATE_DIM], [1.0; STATE_DIM]);
    assert!(build_model(0, 0.05, &[a]).is_err());
}

#[test]
fn probability_region_quantiles() {
    let e = probability_region(&[0.0], &[1.0], 0.99, 1);
    assert!((e.semi_axes[0] - 6.634_896_601_021_214f64.sqrt()).abs() < 1e-8);
    assert!((e.semi_axes[0] - 2.576).abs() < 1e-3);
    // Two degrees of freedom have the closed form -2 ln(1 - P).
    for p in [0.1, 0.5, 0.95, 0.999] {
        let e = probability_region(&[1.0, 2.0], &[4.0, 0.25], p, 2);
        let q = -2.0 * (1.0 - p).ln();
        assert!((e.semi_axes[0] - (4.0 * q).sqrt()).abs() < 1e-9);
        assert!((e.semi_axes[1] - (0.25 * q).sqrt()).abs() < 1e-9);
        assert_eq!(e.center, vec![1.0, 2.0]);
    }
    let e = probability_region(&[0.0; 3], &[1.0; 3], 0.95, 3);
    assert!((e.semi_axes[0].powi(2) - 7.815).abs() < 1e-3);
    let tiny = probability_region(&[0.0; 3], &[1.0; 3], 1e-12, 3);
    assert!(tiny.semi_axes.iter().all(|a| *a < 1e-3));
}

#[test]
fn baselines_of_exact_executions_are_zero() {
    let prims = prims();
    let prim = &prims[3];
    let comps: Vec<_> = (0..3).map(|_| shifted_component(prim, 0.05, |_, _| 0.0)).collect();
    let b = compute_baselines(&[(prim, comps.as_slice())], 0.05).unwrap();
    assert_eq!(b.global, [0.0; STATE_DIM]);
    assert_eq!(b.per_primitive[&3], b.global);
}

#[test]
fn baselines_match_hand_variance() {
    let prims = prims();
    let prim = &prims[40];
    let offsets = [0.1, -0.05, 0.2];
    let comps: Vec<_> = offsets
        .iter()
        .map(|&o| shifted_component(prim, 0.05, move |k, d| o * (1.0 + d as f64) * (k as f64 * 0.05).cos()))
        .collect();
    let b = compute_baselines(&[(prim, comps.as_slice())], 0.05).unwrap();
    let grid = model_grid(prim.t_f, 0.05);
    for (k, &t) in grid.iter().enumerate() {
        let r = prim.state_at(t).to_array();
        for d in 0..STATE_DIM {
            let devs: Vec<f64> = comps.iter().map(|c| c.mean[k][d] - r[d]).collect();
            let hand = devs.iter().map(|x| x * x).sum::<f64>() / 2.0;
            assert!((b.time_varying[&40][k][d] - hand).abs() < 1e-10);
        }
    }
}

#[test]
fn area_formula_by_hand() {
    let q: f64 = 6.634_896_601_021_214;
    let var = [0.01, 0.04, 0.09];
    let a: Vec<f64> = var.iter().map(|v| (v * q).sqrt()).collect();
    let hand = PI * (a[0] * a[1] + a[0] * a[2] + a[1] * a[2]) / 3.0;
    assert!((mean_pair_area(var, 0.99) - hand).abs() < 1e-12);
}

#[test]
fn identical_margins_normalize_to_one() {
    let prims = prims();
    let prim = &prims[0];
    let n = model_grid(prim.t_f, 0.05).len();
    // Every component mean sits at +-s on every axis; the baselines and the
    // model then see the same constant variance.
    let s = 0.1;
    let comps: Vec<_> = [s, -s].iter().map(|&o| shifted_component(prim, 0.05, move |_, _| o)).collect();
    let comps: Vec<AlignedComponent> =
        comps.into_iter().map(|c| AlignedComponent { var: vec![[1e-300; STATE_DIM]; n], ..c }).collect();
    let model = build_model(0, 0.05, &comps).unwrap();
    let baselines = compute_baselines(&[(prim, comps.as_slice())], 0.05).unwrap();
    // Baselines divide by J - 1 = 1, the mixture by J = 2.
    let mut models = BTreeMap::new();
    models.insert(0, model);
    let report = area_report(&models, &baselines, 0.99).unwrap();
    for kind in [MarginKind::GlobalSphere, MarginKind::PerPrimitiveSphere, MarginKind::TimeVaryingSphere] {
        assert!((report.normalized(kind) - 1.0).abs() < 1e-12);
    }
    assert!((report.normalized(MarginKind::LearnedModel) - 0.5).abs() < 1e-9);
}

fn model_from(prim: &MotionPrimitive, dt: f64, mean: impl Fn(f64) -> [f64; STATE_DIM]) -> PrimitiveExecutionModel {
    let grid = model_grid(prim.t_f, dt);
    let per_dim = (0..STATE_DIM)
        .map(|d| DimSeries { mu: grid.iter().map(|&t| mean(t)[d]).collect(), var: vec![1e-2; grid.len()] })
        .collect();
    PrimitiveExecutionModel { primitive_id: prim.id, dt_model: dt, j_i: 2, per_dim }
}

#[test]
fn rmse_by_hand() {
    let prims = prims();
    let prim = &prims[0];
    // Model mean offset by 0.3 m along y from the reference.
    let model = model_from(prim, 0.05, |t| {
        let mut r = prim.state_at(t).to_array();
        r[1] += 0.3;
        r
    });
    let mut trace = ExecutionTrace::new(0, [None; 3]);
    for (tau, dx) in [(0.5, 0.1), (1.5, -0.2)] {
        let mut s = prim.state_at(tau);
        s.position[0] += dx;
        trace.samples.push(TraceSample { t: tau, tau, state: s });
    }
    let mut models = BTreeMap::new();
    models.insert(0, model);
    let r = rmse_report(&models, &[trace], &prims).unwrap();
    let obs_ref = ((0.1f64.powi(2) + 0.2f64.powi(2)) / 2.0).sqrt();
    let obs_model = ((0.1f64.powi(2) + 0.09 + 0.2f64.powi(2) + 0.09) / 2.0).sqrt();
    assert!((r.obs_vs_reference.mean - obs_ref).abs() < 1e-9);
    assert!((r.obs_vs_model_mean.mean - obs_model).abs() < 1e-9);
    assert!((r.reference_vs_model_mean.mean - 0.3).abs() < 1e-9);
    assert_eq!(r.obs_vs_reference.std, 0.0);
}

#[test]
fn degenerate_model_collapses_rmse_rows() {
    let prims = prims();
    let prim = &prims[7];
    let model = model_from(prim, 0.05, |t| prim.state_at(t).to_array());
    let mut trace = ExecutionTrace::new(7, [None; 3]);
    for k in 0..=20 {
        let tau = k as f64 * 0.1;
        let mut s = prim.state_at(tau);
        s.position[2] += 0.05 * (k as f64).sin();
        trace.samples.push(TraceSample { t: tau, tau, state: s });
    }
    let mut models = BTreeMap::new();
    models.insert(7, model);
    let r = rmse_report(&models, &[trace], &prims).unwrap();
    assert!((r.obs_vs_reference.mean - r.obs_vs_model_mean.mean).abs() < 1e-12);
    assert!(r.reference_vs_model_mean.mean < 1e-12);
}

fn synthetic_trace(prim: &MotionPrimitive, residual: impl Fn(f64, usize) -> f64, dt: f64) -> ExecutionTrace {
    let mut trace = ExecutionTrace::new(prim.id, [None; 3]);
    let n = (prim.t_f / dt).round() as usize;
    for k in 0..=n {
        let tau = k as f64 * dt;
        let mut x = prim.state_at(tau).to_array();
        for (d, v) in x.iter_mut().enumerate() {
            *v += residual(tau, d);
        }
        trace.samples.push(TraceSample { t: tau, tau, state: State::from_array(x) });
    }
    trace
}

#[test]
fn noiseless_grid_observations_are_reproduced() {
    let prims = prims();
    let prim = &prims[30];
    let residual = |t: f64, d: usize| 0.05 * (1.3 * t + d as f64).sin();
    let trace = synthetic_trace(prim, residual, 0.05);
    let comp = align_trace(&trace, prim, 0.05).unwrap();
    for (k, s) in trace.samples.iter().enumerate() {
        let x = s.state.to_array();
        for d in 0..STATE_DIM {
            assert!((comp.mean[k][d] - x[d]).abs() < 1e-5, "k {k} d {d}");
        }
    }
}

#[test]
fn aligned_values_match_dense_resampling() {
    let prims = prims();
    let prim = &prims[60];
    let residual = |t: f64, d: usize| 0.04 * (2.0 * t + 0.5 * d as f64).cos();
    // Sparse observations at 10 Hz, aligned on the 20 Hz grid.
    let sparse = align_trace(&synthetic_trace(prim, residual, 0.1), prim, 0.05).unwrap();
    let dense = align_trace(&synthetic_trace(prim, residual, 0.01), prim, 0.05).unwrap();
    for k in 0..sparse.mean.len() {
        for d in 0..STATE_DIM {
            let tol = 2.0 * sparse.var[k][d].sqrt() + 1e-9;
            assert!((sparse.mean[k][d] - dense.mean[k][d]).abs() <= tol, "k {k} d {d}");
        }
    }
}

#[test]
fn grid_beyond_observations_reverts_to_prior() {
    let prims = prims();
    let prim = &prims[0];
    let mut trace = synthetic_trace(prim, |t, _| 0.02 * (5.0 * t).sin(), 0.02);
    // Keep the first 95% of the primitive.
    trace.samples.retain(|s| s.tau <= 0.95 * prim.t_f);
    let comp = align_trace(&trace, prim, 0.05).unwrap();
    let inside = comp.var[10][0];
    let end = *comp.var.last().unwrap();
    assert!(end[0] > inside);
}

#[test]
fn axis_permuted_traces_give_permuted_models() {
    let prims = prims();
    // Primitive with x_F = (1, 0, 1) and its image under the axis swap x <-> y.
    let find = |p: [f64; 3]| prims.iter().find(|q| q.x_i.is_at_rest() && q.x_f == State::at_rest(p)).unwrap();
    let a = find([1.0, 0.0, 1.0]);
    let b = find([0.0, 1.0, 1.0]);
    let swap = |d: usize| match d {
        0 => 1,
        1 => 0,
        3 => 4,
        4 => 3,
        other => other,
    };
    let residuals = [|t: f64, d: usize| 0.03 * (t + d as f64).sin(), |t: f64, d: usize| 0.02 * (2.0 * t - d as f64).cos()];
    let mut comps_a = Vec::new();
    let mut comps_b = Vec::new();
    for r in residuals {
        comps_a.push(align_trace(&synthetic_trace(a, r, 0.02), a, 0.05).unwrap());
        comps_b.push(align_trace(&synthetic_trace(b, move |t, d| r(t, swap(d)), 0.02), b, 0.05).unwrap());
    }
    let ma = build_model(a.id, 0.05, &comps_a).unwrap();
    let mb = build_model(b.id, 0.05, &comps_b).unwrap();
    for k in 0..ma.len() {
        let (mu_a, var_a) = ma.at_index(k);
        let (mu_b, var_b) = mb.at_index(k);
        for d in 0..STATE_DIM {
            assert!((mu_a[d] - mu_b[swap(d)]).abs() <= 1e-12 * (1.0 + mu_a[d].abs()));
            assert!((var_a[d] - var_b[swap(d)]).abs() <= 1e-12 * (1.0 + var_a[d]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn baselines_are_dominated(
        picks in prop::collection::vec((0usize..104, prop::collection::vec(-0.3f64..0.3, 2..5)), 1..4),
        freq in 0.1f64..3.0,
    ) {
        let prims = prims();
        let mut inputs: BTreeMap<usize, Vec<AlignedComponent>> = BTreeMap::new();
        for (id, amps) in &picks {
            let comps = amps
                .iter()
                .map(|&a| shifted_component(&prims[*id], 0.05, move |k, d| a * (freq * k as f64 * 0.05 + d as f64).sin()))
                .collect();
            inputs.insert(*id, comps);
        }
        let refs: Vec<(&MotionPrimitive, &[AlignedComponent])> =
            inputs.iter().map(|(id, c)| (&prims[*id], c.as_slice())).collect();
        let b = compute_baselines(&refs, 0.05).unwrap();
        for (id, series) in &b.time_varying {
            let per = b.per_primitive[id];
            for v in series {
                for d in 0..STATE_DIM {
                    prop_assert!(b.global[d] >= per[d]);
                    prop_assert!(per[d] >= v[d]);
                }
            }
        }
    }
}
