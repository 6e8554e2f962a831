//! End-to-end pipeline stages over an artifact directory.
//!
//! Every stage reads its inputs from files written by earlier stages and
//! writes its outputs atomically. Outputs whose bytes would not change are
//! left untouched, so rerunning a stage on unchanged inputs is a no-op on
//! disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::io;
use crate::lattice::{generate_primitive_set, LatticeConfig, MotionPrimitive, PlanOutput, PrimitiveSetFile, State, Vec3};
use crate::model::{
    align, area_report, build_model, compute_baselines, fit_trace, model_grid, rmse_report, AlignedComponent,
    AreaReport, BaselineMargins, ExecutionTrace, MarginKind, PrimitiveExecutionModel, RmseReport,
};
use crate::monitor::{classify_execution, monitor_stream, Method, MonitorConfig, StreamRecord, StreamVerdict};
use crate::planner::{plan, MarginProvider, OccupancyWorld, PlanningProblem};
use crate::plot;
use crate::seed;
use crate::sim::{augment_triplet, draw_wind_bias, execute_triplet, middle_start, select_triplets, CollectOptions, FaultKind, FaultSpec, SimConfig};

const FAULT_STREAM: u64 = 0xFA17;

/// Artifact locations, relative to the pipeline root unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub primitives: PathBuf,
    pub dataset: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            primitives: "primitives.json".into(),
            dataset: "dataset".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Primitives to collect. Empty selects `primitive_count` evenly spaced
    /// ids, or the whole set when that is unset.
    pub primitive_ids: Vec<usize>,
    pub primitive_count: Option<usize>,
    pub triplets_per_primitive: usize,
    /// The first this many traces of each primitive are used for training.
    pub train_per_primitive: usize,
    pub reuse_triplets: bool,
    /// Standard deviation of the per-dataset wind bias, m/s^2.
    pub wind_bias_std: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            primitive_ids: Vec::new(),
            primitive_count: None,
            triplets_per_primitive: 20,
            train_per_primitive: 10,
            reuse_triplets: true,
            wind_bias_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Injected bias in multiples of `K_p` times the model's largest
    /// positional standard deviation.
    pub fault_sigma_multiple: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { fault_sigma_multiple: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub lattice: LatticeConfig,
    pub sim: SimConfig,
    pub monitor: MonitorConfig,
    /// Probability of the safety-margin regions.
    pub margin_p: f64,
    pub dt_model: f64,
    pub dataset: DatasetConfig,
    pub detection: DetectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paths: Paths::default(),
            lattice: LatticeConfig::default(),
            sim: SimConfig::default(),
            monitor: MonitorConfig::default(),
            margin_p: 0.99,
            dt_model: crate::model::DEFAULT_DT_MODEL,
            dataset: DatasetConfig::default(),
            detection: DetectionConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Ten evenly spaced primitives with twenty triplets each.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.dataset.primitive_count = Some(10);
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = io::read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.sim.validate()?;
        self.monitor.validate()?;
        if !(self.margin_p > 0.0 && self.margin_p < 1.0) {
            return Err(Error::InvalidConfig("margin_p must lie in (0, 1)".into()));
        }
        if !(self.dt_model > 0.0 && self.dt_model.is_finite()) {
            return Err(Error::InvalidConfig("dt_model must be positive".into()));
        }
        let d = &self.dataset;
        if d.train_per_primitive > d.triplets_per_primitive {
            return Err(Error::InvalidConfig("train_per_primitive exceeds triplets_per_primitive".into()));
        }
        if !(d.wind_bias_std >= 0.0 && d.wind_bias_std.is_finite()) {
            return Err(Error::InvalidConfig("wind_bias_std must be non-negative".into()));
        }
        if !(self.detection.fault_sigma_multiple.is_finite()) {
            return Err(Error::InvalidConfig("fault_sigma_multiple must be finite".into()));
        }
        Ok(())
    }

    /// Primitive ids the dataset covers, given a set of `n` primitives.
    pub fn selected_ids(&self, n: usize) -> Result<Vec<usize>> {
        let d = &self.dataset;
        if !d.primitive_ids.is_empty() {
            if let Some(&bad) = d.primitive_ids.iter().find(|&&id| id >= n) {
                return Err(Error::UnknownPrimitive(bad));
            }
            return Ok(d.primitive_ids.clone());
        }
        Ok(match d.primitive_count {
            Some(k) => {
                let k = k.min(n);
                (0..k).map(|i| i * n / k).collect()
            }
            None => (0..n).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Path relative to the dataset directory.
    pub file: String,
    pub index: usize,
    pub triplet: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub primitive_id: usize,
    pub train: Vec<TraceEntry>,
    pub test: Vec<TraceEntry>,
}

/// Index of a collected dataset and the simulator settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub wind_bias: Vec3,
    pub sim: SimConfig,
    pub triplets_per_primitive: usize,
    pub train_per_primitive: usize,
    pub total_traces: usize,
    pub primitives: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIndex {
    pub dt_model: f64,
    pub primitive_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// One confusion matrix: normal executions against fault-injected ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub true_normal: usize,
    pub false_abnormal: usize,
    pub false_normal: usize,
    pub true_abnormal: usize,
}

impl Confusion {
    pub fn recall(&self) -> f64 {
        let n = self.true_abnormal + self.false_normal;
        if n == 0 {
            0.0
        } else {
            self.true_abnormal as f64 / n as f64
        }
    }

    pub fn false_positive_rate(&self) -> f64 {
        let n = self.true_normal + self.false_abnormal;
        if n == 0 {
            0.0
        } else {
            self.false_abnormal as f64 / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub rows: Vec<(Split, Method, Confusion)>,
}

impl DetectionReport {
    pub fn get(&self, split: Split, method: Method) -> Option<Confusion> {
        self.rows.iter().find(|(s, m, _)| *s == split && *m == method).map(|r| r.2)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "set,method,actual_normal_predicted_normal,actual_normal_predicted_abnormal,\
             actual_abnormal_predicted_normal,actual_abnormal_predicted_abnormal,recall,false_positive_rate\n",
        );
        for (split, method, c) in &self.rows {
            let method = match method {
                Method::Naive => "naive",
                Method::Beta => "beta",
            };
            let _ = writeln!(
                s,
                "{},{method},{},{},{},{},{:.6},{:.6}",
                split.label(),
                c.true_normal,
                c.false_abnormal,
                c.false_normal,
                c.true_abnormal,
                c.recall(),
                c.false_positive_rate()
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Rmse,
    Area,
    Detection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub world: PathBuf,
    pub start: State,
    pub goal: State,
    pub t_s: f64,
    pub margin: Option<MarginKind>,
    pub robot_radius: f64,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSummary {
    pub records: usize,
    pub first_flag: Option<f64>,
    pub verdicts: Vec<StreamVerdict>,
}

/// A pipeline bound to an artifact root directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub root: PathBuf,
    pub config: PipelineConfig,
}

fn trace_file(id: usize, k: usize) -> String {
    format!("traces/p{id:03}_{k:02}.jsonl")
}

impl Pipeline {
    pub fn new(root: impl Into<PathBuf>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { root: root.into(), config })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn primitives_path(&self) -> PathBuf {
        self.resolve(&self.config.paths.primitives)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.dataset)
    }

    pub fn models_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.models)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.reports)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset_dir().join("manifest.json")
    }

    pub fn model_path(&self, id: usize) -> PathBuf {
        self.models_dir().join(format!("model_{id:03}.json"))
    }

    pub fn baselines_path(&self) -> PathBuf {
        self.models_dir().join("baselines.json")
    }

    pub fn report_path(&self, kind: ReportKind) -> PathBuf {
        self.reports_dir().join(match kind {
            ReportKind::Rmse => "rmse.csv",
            ReportKind::Area => "area.csv",
            ReportKind::Detection => "detection.csv",
        })
    }

    pub fn load_primitives(&self) -> Result<Vec<MotionPrimitive>> {
        Ok(PrimitiveSetFile::load(&self.primitives_path())?.primitives)
    }

    pub fn load_manifest(&self) -> Result<DatasetManifest> {
        io::read_json(&self.manifest_path())
    }

    pub fn load_trace(&self, entry: &TraceEntry) -> Result<ExecutionTrace> {
        ExecutionTrace::load(&self.dataset_dir().join(&entry.file))
    }

    pub fn load_models(&self) -> Result<BTreeMap<usize, PrimitiveExecutionModel>> {
        let index: ModelIndex = io::read_json(&self.models_dir().join("index.json"))?;
        index
            .primitive_ids
            .iter()
            .map(|&id| PrimitiveExecutionModel::load(&self.model_path(id)).map(|m| (id, m)))
            .collect()
    }

    pub fn load_baselines(&self) -> Result<BaselineMargins> {
        BaselineMargins::load(&self.baselines_path())
    }

    /// Generate the primitive set and write it. Returns the primitive count.
    pub fn gen_primitives(&self) -> Result<usize> {
        let primitives = generate_primitive_set(&self.config.lattice)?;
        let n = primitives.len();
        PrimitiveSetFile { config: self.config.lattice.clone(), primitives }.save(&self.primitives_path())?;
        Ok(n)
    }

    /// Simulate the configured triplets and write traces plus a manifest.
    pub fn collect(&self) -> Result<DatasetManifest> {
        let primitives = self.load_primitives()?;
        let d = &self.config.dataset;
        let ids = if d.triplets_per_primitive == 0 { Vec::new() } else { self.config.selected_ids(primitives.len())? };
        let wind_bias = draw_wind_bias(self.config.seed, d.wind_bias_std);
        let base = &self.config.sim;
        let sim = SimConfig {
            bias: [0, 1, 2].map(|k| base.bias[k] + wind_bias[k]),
            seed: self.config.seed,
            ..base.clone()
        };
        let options = CollectOptions { triplets_per_primitive: d.triplets_per_primitive, reuse_triplets: d.reuse_triplets };
        let jobs: Vec<(usize, usize, [usize; 3])> = ids
            .iter()
            .map(|&id| select_triplets(id, &primitives, &options, sim.seed).map(|ts| (id, ts)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flat_map(|(id, ts)| ts.into_iter().enumerate().map(move |(k, t)| (id, k, t)))
            .collect();
        let dir = self.dataset_dir();
        jobs.par_iter()
            .map(|&(id, k, triplet)| {
                let cfg = sim.with_seed(seed::mix(sim.seed, &[id as u64, k as u64]));
                execute_triplet(triplet, &primitives, &cfg, &[])?.save(&dir.join(trace_file(id, k)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut entries: Vec<ManifestEntry> =
            ids.iter().map(|&id| ManifestEntry { primitive_id: id, train: Vec::new(), test: Vec::new() }).collect();
        for &(id, k, triplet) in &jobs {
            let entry = entries.iter_mut().find(|e| e.primitive_id == id).expect("listed primitive");
            let t = TraceEntry { file: trace_file(id, k), index: k, triplet };
            if k < d.train_per_primitive {
                entry.train.push(t);
            } else {
                entry.test.push(t);
            }
        }
        let manifest = DatasetManifest {
            seed: self.config.seed,
            wind_bias,
            sim,
            triplets_per_primitive: d.triplets_per_primitive,
            train_per_primitive: d.train_per_primitive,
            total_traces: jobs.len(),
            primitives: entries,
        };
        self.remove_stale_traces(&jobs)?;
        io::write_json_atomic(&self.manifest_path(), &manifest)?;
        Ok(manifest)
    }

    fn remove_stale_traces(&self, jobs: &[(usize, usize, [usize; 3])]) -> Result<()> {
        let dir = self.dataset_dir().join("traces");
        let Ok(listing) = fs::read_dir(&dir) else {
            return Ok(());
        };
        let keep: std::collections::BTreeSet<String> = jobs.iter().map(|&(id, k, _)| trace_file(id, k)).collect();
        for entry in listing {
            let path = entry?.path();
            let name = format!("traces/{}", path.file_name().unwrap_or_default().to_string_lossy());
            if name.ends_with(".jsonl") && !keep.contains(&name) {
                fs::remove_file(&path)?;
            }
        }
        Ok(())
    }

    /// Fit GPs to every training trace, build one model per primitive and
    /// the baseline margins. Returns the trained primitive ids.
    pub fn train(&self) -> Result<Vec<usize>> {
        let primitives = self.load_primitives()?;
        let manifest = self.load_manifest()?;
        let dt_model = self.config.dt_model;
        let jobs: Vec<(usize, &TraceEntry)> = manifest
            .primitives
            .iter()
            .flat_map(|e| e.train.iter().map(move |t| (e.primitive_id, t)))
            .collect();
        let gp_dir = self.models_dir().join("gp");
        let fitted: Vec<AlignedComponent> = jobs
            .par_iter()
            .map(|&(id, entry)| {
                let prim = primitives.get(id).ok_or(Error::UnknownPrimitive(id))?;
                let gps: Vec<GpModel> = fit_trace(&self.load_trace(entry)?, prim)?;
                io::write_json_atomic(&gp_dir.join(format!("p{id:03}_{:02}.json", entry.index)), &gps)?;
                Ok(align(&gps, prim, &model_grid(prim.t_f, dt_model)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut by_primitive: BTreeMap<usize, Vec<AlignedComponent>> = BTreeMap::new();
        for ((id, _), comp) in jobs.iter().zip(fitted) {
            by_primitive.entry(*id).or_default().push(comp);
        }
        let mut ids = Vec::new();
        for (id, comps) in &by_primitive {
            build_model(*id, dt_model, comps)?.save(&self.model_path(*id))?;
            ids.push(*id);
        }
        let inputs: Vec<(&MotionPrimitive, &[AlignedComponent])> =
            by_primitive.iter().map(|(id, c)| (&primitives[*id], c.as_slice())).collect();
        if !inputs.is_empty() {
            compute_baselines(&inputs, dt_model)?.save(&self.baselines_path())?;
        }
        io::write_json_atomic(&self.models_dir().join("index.json"), &ModelIndex { dt_model, primitive_ids: ids.clone() })?;
        Ok(ids)
    }

    fn test_traces(&self, manifest: &DatasetManifest) -> Result<Vec<ExecutionTrace>> {
        manifest.primitives.iter().flat_map(|e| e.test.iter()).map(|t| self.load_trace(t)).collect()
    }

    pub fn rmse(&self) -> Result<RmseReport> {
        let primitives = self.load_primitives()?;
        let models = self.load_models()?;
        let traces = self.test_traces(&self.load_manifest()?)?;
        rmse_report(&models, &traces, &primitives)
    }

    pub fn area(&self) -> Result<AreaReport> {
        area_report(&self.load_models()?, &self.load_baselines()?, self.config.margin_p)
    }

    /// Classify every normal trace of both splits, and a fault-injected
    /// re-execution of each, with both detection methods.
    pub fn detection(&self) -> Result<DetectionReport> {
        let primitives = self.load_primitives()?;
        let models = self.load_models()?;
        let manifest = self.load_manifest()?;
        let monitor = &self.config.monitor;
        let mut rows = Vec::new();
        for split in [Split::Train, Split::Test] {
            let jobs: Vec<(usize, &TraceEntry)> = manifest
                .primitives
                .iter()
                .filter(|e| models.contains_key(&e.primitive_id))
                .flat_map(|e| {
                    let list = if split == Split::Train { &e.train } else { &e.test };
                    list.iter().map(move |t| (e.primitive_id, t))
                })
                .collect();
            let outcomes: Vec<[bool; 4]> = jobs
                .par_iter()
                .map(|&(id, entry)| {
                    let model = &models[&id];
                    let normal = self.load_trace(entry)?;
                    let faulty = self.fault_execution(id, entry, model, &manifest, &primitives)?;
                    Ok([
                        classify_execution(&normal, model, monitor, Method::Naive).abnormal,
                        classify_execution(&normal, model, monitor, Method::Beta).abnormal,
                        classify_execution(&faulty, model, monitor, Method::Naive).abnormal,
                        classify_execution(&faulty, model, monitor, Method::Beta).abnormal,
                    ])
                })
                .collect::<Result<Vec<_>>>()?;
            for (m, method) in [Method::Naive, Method::Beta].into_iter().enumerate() {
                let false_abnormal = outcomes.iter().filter(|o| o[m]).count();
                let true_abnormal = outcomes.iter().filter(|o| o[2 + m]).count();
                rows.push((
                    split,
                    method,
                    Confusion {
                        true_normal: outcomes.len() - false_abnormal,
                        false_abnormal,
                        false_normal: outcomes.len() - true_abnormal,
                        true_abnormal,
                    },
                ));
            }
        }
        Ok(DetectionReport { rows })
    }

    /// Re-execute a dataset triplet with a constant extra bias along a
    /// random signed axis, active from the start of the triplet to the end
    /// of the plan.
    pub fn fault_execution(
        &self,
        id: usize,
        entry: &TraceEntry,
        model: &PrimitiveExecutionModel,
        manifest: &DatasetManifest,
        primitives: &[MotionPrimitive],
    ) -> Result<ExecutionTrace> {
        let stream = seed::mix(manifest.seed, &[id as u64, entry.index as u64, FAULT_STREAM]);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut direction = [0.0; 3];
        direction[rng.random_range(0..3)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let magnitude =
            self.config.detection.fault_sigma_multiple * manifest.sim.kp * model.max_position_variance().sqrt();
        let (plan, _) = augment_triplet(entry.triplet, primitives)?;
        let onset = middle_start(entry.triplet, primitives)? - primitives[entry.triplet[0]].t_f;
        let duration = plan.duration(primitives)? - onset;
        let fault = FaultSpec::new(FaultKind::ExtraBias, magnitude, onset, duration).along(direction);
        execute_triplet(entry.triplet, primitives, &manifest.sim.with_seed(stream), &[fault])
    }

    /// Compute and write one report. Returns the CSV text.
    pub fn report(&self, kind: ReportKind) -> Result<String> {
        let csv = match kind {
            ReportKind::Rmse => self.rmse()?.to_csv(),
            ReportKind::Area => self.area()?.to_csv(),
            ReportKind::Detection => self.detection()?.to_csv(),
        };
        io::write_atomic(&self.report_path(kind), csv.as_bytes())?;
        Ok(csv)
    }

    /// Write one envelope plot per trained primitive. Returns the paths.
    pub fn envelopes(&self) -> Result<Vec<PathBuf>> {
        let primitives = self.load_primitives()?;
        let models = self.load_models()?;
        let baselines = self.load_baselines()?;
        let dir = self.reports_dir().join("envelopes");
        models
            .iter()
            .map(|(id, model)| {
                let svg = plot::envelope_svg(&primitives[*id], model, &baselines, self.config.margin_p);
                let path = dir.join(format!("p{id:03}.svg"));
                io::write_atomic(&path, svg.as_bytes())?;
                Ok(path)
            })
            .collect()
    }

    pub fn plan(&self, request: &PlanRequest) -> Result<PlanOutput> {
        let primitives = self.load_primitives()?;
        let world = OccupancyWorld::load(&request.world)?;
        let mut problem = PlanningProblem::new(request.start, request.goal, world);
        problem.t_s = request.t_s;
        problem.robot_radius = request.robot_radius;
        if let Some(kind) = request.margin {
            let models = if kind == MarginKind::LearnedModel { self.load_models()? } else { BTreeMap::new() };
            let baselines = self.load_baselines()?;
            problem.margin = MarginProvider::new(kind, self.config.margin_p, Arc::new(models), Some(Arc::new(baselines)));
        }
        let output = plan(&problem, &primitives, &self.config.lattice)?.output(&primitives)?;
        io::write_json_atomic(&request.output, &output)?;
        Ok(output)
    }

    /// Run the Beta monitor over a stream file. Verdicts are written as JSON
    /// lines to `output` when given.
    pub fn monitor(&self, stream: &Path, output: Option<&Path>) -> Result<MonitorSummary> {
        let records: Vec<StreamRecord> = io::read_json_lines(stream)?;
        let verdicts = monitor_stream(&records, &self.load_models()?, &self.config.monitor)?;
        if let Some(out) = output {
            io::write_atomic(out, &io::to_json_lines(&verdicts)?)?;
        }
        Ok(MonitorSummary {
            records: records.len(),
            first_flag: verdicts.iter().find(|v| v.flagged).map(|v| v.t),
            verdicts,
        })
    }

    /// Every stage in order, then all three reports.
    pub fn run_all(&self, svg: bool) -> Result<[String; 3]> {
        self.gen_primitives()?;
        self.collect()?;
        self.train()?;
        if svg {
            self.envelopes()?;
        }
        Ok([self.report(ReportKind::Rmse)?, self.report(ReportKind::Area)?, self.report(ReportKind::Detection)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_selection_is_evenly_spaced() {
        let ids = PipelineConfig::desk().selected_ids(104).unwrap();
        assert_eq!(ids, vec![0, 10, 20, 31, 41, 52, 62, 72, 83, 93]);
        assert_eq!(PipelineConfig::default().selected_ids(104).unwrap().len(), 104);
    }

    #[test]
    fn config_round_trips_and_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 3, "dataset": {"primitive_count": 2}}"#).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.dataset.triplets_per_primitive, 20);
        assert_eq!(cfg.margin_p, 0.99);
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_rejects_bad_split() {
        let mut cfg = PipelineConfig::default();
        cfg.dataset.train_per_primitive = 30;
        assert!(cfg.validate().is_err());
        cfg = PipelineConfig { margin_p: 1.0, ..PipelineConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
