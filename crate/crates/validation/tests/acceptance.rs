//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use primguard::gp::{kernel, GpModel, Hyperparams, MarginalLikelihood};
use primguard::lattice::{generate_primitive_set, Family, LatticeConfig, STATE_DIM};
use primguard::model::{build_model, initial_hyperparams, probability_region, AlignedComponent, MarginKind};
use primguard::monitor::{Method, MonitorConfig, MonitorState};
use primguard::pipeline::{Pipeline, PipelineConfig, ReportKind, Split};
use primguard::planner::plan;
use primguard::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn check(id: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let passed = o.passed && elapsed <= limit;
    println!(
        "{} criterion {id:>2} {name}: {} [{:.1} s, limit {} s]",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    passed
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn primitive_count() -> Outcome {
    let prims = generate_primitive_set(&LatticeConfig::default()).unwrap();
    let rest = prims.iter().filter(|p| p.family() == Family::RestToRest).count();
    outcome(prims.len() == 104 && rest == 26, format!("{} primitives, {rest} rest-to-rest", prims.len()))
}

fn gp_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_pred: f64 = 0.0;
    for _ in 0..50 {
        let h = Hyperparams::new(rng.random_range(0.01..2.0), rng.random_range(0.05..2.0), rng.random_range(1e-4..0.1));
        let t = [rng.random_range(0.0..1.0), rng.random_range(1.0..2.0)];
        let y = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let m = GpModel::condition(h, t.to_vec(), y.to_vec()).unwrap();
        // Closed-form inverse of the 2x2 covariance.
        let d = h.noise_variance + m.jitter();
        let (a, b, c) = (kernel(t[0], t[0], &h) + d, kernel(t[0], t[1], &h), kernel(t[1], t[1], &h) + d);
        let det = a * c - b * b;
        let inv = [[c / det, -b / det], [-b / det, a / det]];
        for k in 0..=20 {
            let q = -0.5 + k as f64 * 0.15;
            let kv = [kernel(q, t[0], &h), kernel(q, t[1], &h)];
            let w = [inv[0][0] * y[0] + inv[0][1] * y[1], inv[1][0] * y[0] + inv[1][1] * y[1]];
            let mean = kv[0] * w[0] + kv[1] * w[1];
            let quad = kv[0] * (inv[0][0] * kv[0] + inv[0][1] * kv[1]) + kv[1] * (inv[1][0] * kv[0] + inv[1][1] * kv[1]);
            let var = (h.prior_variance() - quad).clamp(h.noise_variance, h.prior_variance());
            let (pm, pv) = m.predict(q);
            worst_pred = worst_pred.max((pm - mean).abs()).max((pv - var).abs());
        }
    }
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let truth = Hyperparams::new(rng.random_range(0.01..1.0), rng.random_range(0.1..1.0), rng.random_range(1e-4..1e-2));
        let n = 40;
        let mut t: Vec<f64> = (0..n).map(|k| (k as f64 + rng.random_range(0.05..0.95)) * 2.0 / n as f64).collect();
        t.sort_by(f64::total_cmp);
        let y = sample_gp(&t, &truth, &mut rng);
        let m = primguard::gp::fit(&t, &y, initial_hyperparams(&t, &y)).unwrap();
        let mll = MarginalLikelihood::new(&t, &y);
        let theta = m.hyperparams().to_log();
        let step = 1e-5;
        let grad: f64 = (0..3)
            .map(|i| {
                let (mut up, mut down) = (theta, theta);
                up[i] += step;
                down[i] -= step;
                ((mll.eval_log(&up).unwrap() - mll.eval_log(&down).unwrap()) / (2.0 * step)).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        worst_grad = worst_grad.max(grad);
    }
    outcome(
        worst_pred <= 1e-10 && worst_grad <= 1e-3,
        format!("2-point oracle max error {worst_pred:.1e} (<= 1e-10), max fitted gradient norm {worst_grad:.1e} (<= 1e-3)"),
    )
}

/// Draw from a zero-mean GP with Cholesky of the dense covariance.
fn sample_gp(t: &[f64], h: &Hyperparams, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = t.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = kernel(t[i], t[j], h) + if i == j { h.noise_variance } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    (0..n).map(|i| (0..=i).map(|k| l[i][k] * z[k]).sum()).collect()
}

fn moment_matching() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples = 1_000_000;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let j = rng.random_range(2..=10);
        let components: Vec<AlignedComponent> = (0..j)
            .map(|_| AlignedComponent {
                mean: vec![[0; STATE_DIM].map(|_| rng.random_range(-1.0..1.0))],
                var: vec![[0; STATE_DIM].map(|_| rng.random_range(0.01..0.5))],
            })
            .collect();
        let model = build_model(0, 0.05, &components).unwrap();
        let mut sum = [0.0; STATE_DIM];
        let mut sum_sq = [0.0; STATE_DIM];
        for _ in 0..samples {
            let c = &components[rng.random_range(0..j)];
            for d in 0..STATE_DIM {
                let x = c.mean[0][d] + c.var[0][d].sqrt() * rng.sample::<f64, _>(StandardNormal);
                sum[d] += x;
                sum_sq[d] += x * x;
            }
        }
        for d in 0..STATE_DIM {
            let mean = sum[d] / samples as f64;
            let var = sum_sq[d] / samples as f64 - mean * mean;
            let (mu, v) = (model.per_dim[d].mu[0], model.per_dim[d].var[0]);
            // Mean error relative to the mixture's spread, variance error relative to itself.
            worst = worst.max((mean - mu).abs() / v.sqrt()).max((var - v).abs() / v);
        }
    }
    outcome(worst <= 0.01, format!("max relative deviation from Monte Carlo {worst:.4} (<= 0.01)"))
}

fn coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n_samples = 100_000;
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for n in [1usize, 3, 6] {
        for p in [0.95, 0.99, 0.999] {
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let var: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..4.0)).collect();
            let region = probability_region(&mu, &var, p, n as u32);
            let inside = (0..n_samples)
                .filter(|_| {
                    (0..n)
                        .map(|d| {
                            let x = mu[d] + var[d].sqrt() * rng.sample::<f64, _>(StandardNormal);
                            ((x - region.center[d]) / region.semi_axes[d]).powi(2)
                        })
                        .sum::<f64>()
                        <= 1.0
                })
                .count();
            let frac = inside as f64 / n_samples as f64;
            worst = worst.max((frac - p).abs());
            cells.push(format!("n={n} P={p}: {frac:.4}"));
        }
    }
    outcome(worst <= 0.01, format!("max |fraction - P| {worst:.4} (<= 0.01); {}", cells.join(", ")))
}

fn monitor_calibration() -> Outcome {
    let cfg = MonitorConfig::default();
    let rate = 50.0;
    let runs = 200;
    let false_alarms = (0..runs)
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
            let mut s = MonitorState::new();
            (0..(100.0 * rate) as usize).any(|k| {
                let abnormal = rng.random_bool(1.0 - cfg.p);
                s.update(k as f64 / rate, abnormal, &cfg) > cfg.flag_threshold
            })
        })
        .count();
    let detections = (0..runs)
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(5000 + r);
            let mut s = MonitorState::new();
            (0..=(2.0 * cfg.window * rate) as usize).any(|k| {
                let abnormal = rng.random_bool(10.0 * (1.0 - cfg.p));
                s.update(k as f64 / rate, abnormal, &cfg) > cfg.flag_threshold
            })
        })
        .count();
    let fa = false_alarms as f64 / runs as f64;
    let det = detections as f64 / runs as f64;
    outcome(
        fa < 0.05 && det > 0.95,
        format!("50 Hz: false-alarm rate {fa:.3} (< 0.05), detection within 2 t_W {det:.3} (> 0.95)"),
    )
}

fn planner_optimality() -> Outcome {
    let config = LatticeConfig::default();
    let prims = generate_primitive_set(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let (mut agree, mut solved) = (0, 0);
    for _ in 0..25 {
        let problem = common::random_instance(&mut rng);
        let oracle = common::oracle_cost(&problem, &prims, &config);
        let ok = match (plan(&problem, &prims, &config), oracle) {
            (Ok(p), Some(c)) => {
                solved += 1;
                (p.cost(&prims).unwrap() - c).abs() <= 1e-12 * c
            }
            (Err(Error::NoPlan), None) => true,
            _ => false,
        };
        agree += usize::from(ok);
    }
    let violations = (0..1000u64)
        .filter(|&s| {
            let (small, large) = common::margin_inflation_pair(s, &prims, &config);
            large && !small
        })
        .count();
    outcome(
        agree == 25 && violations == 0,
        format!("{agree}/25 instances match Dijkstra ({solved} solvable), {violations}/1000 monotonicity violations"),
    )
}

struct DeskRun {
    _dir: tempfile::TempDir,
    pipeline: Pipeline,
}

impl DeskRun {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let pipeline = Pipeline::new(dir.path(), PipelineConfig::desk()).unwrap();
        Self { _dir: dir, pipeline }
    }

    fn report_bytes(&self) -> Vec<Vec<u8>> {
        [ReportKind::Rmse, ReportKind::Area, ReportKind::Detection]
            .map(|k| std::fs::read(self.pipeline.report_path(k)).unwrap_or_default())
            .to_vec()
    }
}

fn write_report(p: &Pipeline, kind: ReportKind, csv: &str) {
    let path = p.report_path(kind);
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).unwrap();
    std::fs::write(path, csv).unwrap();
}

fn rmse_trend(run: &DeskRun) -> Outcome {
    let p = &run.pipeline;
    p.gen_primitives().unwrap();
    p.collect().unwrap();
    p.train().unwrap();
    let r = p.rmse().unwrap();
    write_report(p, ReportKind::Rmse, &r.to_csv());
    let (model, reference) = (r.obs_vs_model_mean.mean, r.obs_vs_reference.mean);
    let ratio = model / reference;
    outcome(
        model < reference && ratio <= 0.7,
        format!("obs vs model mean {model:.4} m, obs vs reference {reference:.4} m, ratio {ratio:.3} (<= 0.7)"),
    )
}

fn area_trend(run: &DeskRun) -> Outcome {
    let p = &run.pipeline;
    let a = p.area().unwrap();
    write_report(p, ReportKind::Area, &a.to_csv());
    let v = MarginKind::ALL.map(|k| a.normalized(k));
    let ordered = v[0] == 1.0 && v[0] > v[1] && v[1] > v[2] && v[2] > v[3] && v[3] < 0.5;
    outcome(
        ordered,
        format!("global {:.3} > per-primitive {:.3} > time-varying {:.3} > learned {:.3} (< 0.5)", v[0], v[1], v[2], v[3]),
    )
}

fn detection(run: &DeskRun) -> Outcome {
    let p = &run.pipeline;
    let d = p.detection().unwrap();
    write_report(p, ReportKind::Detection, &d.to_csv());
    let beta = d.get(Split::Test, Method::Beta).unwrap();
    let naive = d.get(Split::Test, Method::Naive).unwrap();
    outcome(
        beta.false_abnormal == 0 && beta.recall() >= 0.9 && beta.recall() >= naive.recall(),
        format!(
            "held-out beta false positives {}, beta recall {:.3} (>= 0.9), naive recall {:.3}",
            beta.false_abnormal,
            beta.recall(),
            naive.recall()
        ),
    )
}

fn determinism(first: &DeskRun) -> Outcome {
    let second = DeskRun::new();
    let csv = second.pipeline.run_all(false).unwrap();
    let a = first.report_bytes();
    let b = second.report_bytes();
    let same_files = a == b && a.iter().all(|f| !f.is_empty());
    let same_text = csv.iter().zip(&a).all(|(s, f)| s.as_bytes() == f.as_slice());
    outcome(same_files && same_text, format!("reports byte-identical across two runs: {}", same_files && same_text))
}

fn main() -> ExitCode {
    let mut all = true;
    all &= check(1, "primitive count", secs(5), primitive_count);
    all &= check(2, "GP correctness", secs(30), gp_correctness);
    all &= check(3, "moment matching", secs(60), moment_matching);
    all &= check(4, "probability-region coverage", secs(60), coverage);
    let run = DeskRun::new();
    all &= check(5, "RMSE trend (desk scale)", secs(600), || rmse_trend(&run));
    all &= check(6, "area trend", secs(300), || area_trend(&run));
    all &= check(7, "detection", secs(600), || detection(&run));
    all &= check(8, "monitor calibration", secs(120), monitor_calibration);
    all &= check(9, "planner optimality", secs(300), planner_optimality);
    all &= check(10, "determinism", secs(1800), || determinism(&run));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
