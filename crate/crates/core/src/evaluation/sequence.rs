use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::protocol::{evaluate_all_tasks, relative_gain, EvalConfig, TaskCatalog, TaskMetric, UpperBoundTable};
use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::learner::{snapshot_id, Learner, TrainHyper};
use crate::metrics::MetricRegistry;
use crate::rehearsal::{
    build_rehearsal_buffer, compose_training_stream, load_or_build_buffer, RehearsalBuffer, RehearsalConfig,
    TaskSchedule, TrainStream,
};
use crate::text;

/// How often all tasks are evaluated while one task trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    /// This many evaluations spread evenly over each task's batches.
    PerTask(usize),
    /// One evaluation every this many batches, plus one at task completion.
    EveryBatches(usize),
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence::PerTask(4)
    }
}

impl Cadence {
    fn chunk(&self, total_steps: usize) -> usize {
        match *self {
            Cadence::PerTask(n) => total_steps.div_ceil(n.max(1)).max(1),
            Cadence::EveryBatches(k) => k.max(1),
        }
    }
}

/// Everything that determines a continual-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub schedule: TaskSchedule,
    /// Rehearsal fraction in `[0, 1]`.
    pub r: f64,
    pub hyper: TrainHyper,
    #[serde(default)]
    pub cadence: Cadence,
    pub eval: EvalConfig,
    /// Seeds capping, buffer sampling and stream shuffling.
    pub data_seed: u64,
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        RehearsalConfig::new(self.r, self.data_seed)?;
        self.hyper.validate()?;
        if self.eval.eval_cap == 0 || self.eval.max_len == 0 {
            return Err(Error::invalid("eval_cap and max_len must be >= 1"));
        }
        if matches!(self.cadence, Cadence::PerTask(0) | Cadence::EveryBatches(0)) {
            return Err(Error::invalid("evaluation cadence must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted) JSON form.
    pub fn digest(&self) -> String {
        canonical_digest(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// Hash of a JSON value with object keys sorted, so field order never matters.
pub fn canonical_digest(value: &serde_json::Value) -> String {
    fn canon(v: &serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(m) => {
                let sorted: BTreeMap<&String, serde_json::Value> = m.iter().map(|(k, v)| (k, canon(v))).collect();
                serde_json::to_value(sorted).expect("map serializes")
            }
            serde_json::Value::Array(a) => serde_json::Value::Array(a.iter().map(canon).collect()),
            other => other.clone(),
        }
    }
    hex::encode(Sha256::digest(canon(value).to_string().as_bytes()))
}

/// One evaluation of one task on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub run_id: String,
    /// Cumulative training batches at evaluation time.
    pub sequence_step: u64,
    pub task_id: String,
    pub metric_id: String,
    pub raw: f64,
    pub rg: f64,
    /// `(raw - initial) / initial`, absent when the initial score is 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vs_initial: Option<f64>,
    /// Task being trained when the evaluation ran (`None` before training).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_task: Option<String>,
}

/// Raw scores and relative gains of every task over the whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelativeGainSeries {
    pub run_id: String,
    pub points: Vec<SeriesPoint>,
    /// `(task_id, step)` at which each scheduled task finished training.
    pub task_end_steps: Vec<(String, u64)>,
    /// First metric of each task, used for single-number summaries.
    pub primary_metric: BTreeMap<String, String>,
}

impl RelativeGainSeries {
    /// Rebuilds a series from the points of a results file.
    ///
    /// A task's primary metric is the first metric it appears with, and its
    /// end step is the last evaluation made while it was being trained.
    pub fn from_points(points: Vec<SeriesPoint>) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::invalid("results are empty"))?;
        let mut s = Self {
            run_id: first.run_id.clone(),
            ..Default::default()
        };
        for p in &points {
            s.primary_metric.entry(p.task_id.clone()).or_insert_with(|| p.metric_id.clone());
            if let Some(t) = &p.training_task {
                match s.task_end_steps.iter_mut().find(|(id, _)| id == t) {
                    Some(e) => e.1 = e.1.max(p.sequence_step),
                    None => s.task_end_steps.push((t.clone(), p.sequence_step)),
                }
            }
        }
        s.points = points;
        Ok(s)
    }

    pub fn final_step(&self) -> u64 {
        self.points.iter().map(|p| p.sequence_step).max().unwrap_or(0)
    }

    pub fn task_ids(&self) -> Vec<&str> {
        self.primary_metric.keys().map(String::as_str).collect()
    }

    pub fn at(&self, step: u64, task_id: &str, metric_id: &str) -> Option<&SeriesPoint> {
        self.points
            .iter()
            .find(|p| p.sequence_step == step && p.task_id == task_id && p.metric_id == metric_id)
    }

    /// Points at the last step, keyed by `(task, metric)`.
    pub fn final_points(&self) -> BTreeMap<(String, String), &SeriesPoint> {
        let last = self.final_step();
        self.points
            .iter()
            .filter(|p| p.sequence_step == last)
            .map(|p| ((p.task_id.clone(), p.metric_id.clone()), p))
            .collect()
    }

    pub fn final_rg(&self, task_id: &str) -> Option<f64> {
        let m = self.primary_metric.get(task_id)?;
        self.at(self.final_step(), task_id, m).map(|p| p.rg)
    }

    pub fn final_raw(&self, task_id: &str) -> Option<f64> {
        let m = self.primary_metric.get(task_id)?;
        self.at(self.final_step(), task_id, m).map(|p| p.raw)
    }

    /// Primary-metric RG of `task_id` right after `task_id` itself finished training.
    pub fn rg_at_own_end(&self, task_id: &str) -> Option<f64> {
        let step = self.task_end_steps.iter().find(|(t, _)| t == task_id)?.1;
        let m = self.primary_metric.get(task_id)?;
        self.at(step, task_id, m).map(|p| p.rg)
    }

    /// Retention flag per task at the final step (primary metric).
    pub fn forgetting_flags(&self, threshold: f64) -> BTreeMap<String, bool> {
        self.primary_metric
            .keys()
            .filter_map(|t| self.final_rg(t).map(|rg| (t.clone(), super::forgetting_flag(rg, threshold))))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub base_snapshot: Option<PathBuf>,
    pub buffers: Vec<PathBuf>,
    pub snapshots: Vec<PathBuf>,
    pub results: Option<PathBuf>,
}

/// Self-describing record of a run; enough to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub config: SequenceConfig,
    pub learner_kind: String,
    pub base_snapshot_id: String,
    pub upper_bounds: UpperBoundTable,
    pub artifacts: Artifacts,
    /// Item count per origin task in each step's stream (one map per scheduled task).
    pub stream_origins: Vec<BTreeMap<String, usize>>,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub complete: bool,
    pub error: Option<String>,
    /// SHA-256 of the results file, once written.
    pub results_digest: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct RunOutcome {
    pub series: RelativeGainSeries,
    pub manifest: RunManifest,
    pub learner: Box<dyn Learner>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const BASE_SNAPSHOT_FILE: &str = "base.snapshot";

/// Trains the schedule in order with rehearsal fraction `r`.
///
/// Before training and then at every cadence point, all scheduled and
/// zero-shot tasks are evaluated. When `out_dir` is given, buffers, the base
/// and per-task snapshots, `results.jsonl` and `manifest.json` are written
/// there; on failure the manifest is still written, flagged incomplete.
pub fn run_continual_sequence(
    run_id: &str,
    config: &SequenceConfig,
    catalog: &TaskCatalog,
    base: &dyn Learner,
    ubs: &UpperBoundTable,
    registry: &MetricRegistry,
    out_dir: Option<&Path>,
) -> Result<RunOutcome> {
    config.validate()?;
    ubs.check_covers(config.schedule.all_task_ids(), catalog)?;
    for z in &config.schedule.zero_shot_eval_ids {
        catalog.get(z)?;
    }
    for t in &config.schedule.task_ids {
        if catalog.get(t)?.spec.zero_shot_only {
            return Err(Error::task(t, "zero-shot task cannot be scheduled for training"));
        }
    }

    let base_bytes = base.snapshot();
    let mut manifest = RunManifest {
        run_id: run_id.to_string(),
        config_digest: config.digest(),
        config: config.clone(),
        learner_kind: base.kind().to_string(),
        base_snapshot_id: snapshot_id(&base_bytes),
        upper_bounds: ubs.clone(),
        artifacts: Artifacts::default(),
        stream_origins: Vec::new(),
        started_at: now(),
        finished_at: None,
        complete: false,
        error: None,
        results_digest: None,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("buffers")).map_err(|e| Error::io(dir, e))?;
        fs::create_dir_all(dir.join("snapshots")).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(BASE_SNAPSHOT_FILE);
        fs::write(&p, &base_bytes).map_err(|e| Error::io(&p, e))?;
        manifest.artifacts.base_snapshot = Some(p);
    }

    let mut learner = base.boxed_clone();
    let result = drive(run_id, config, catalog, &mut learner, ubs, registry, out_dir, &mut manifest);
    manifest.finished_at = Some(now());
    match result {
        Ok(series) => {
            manifest.complete = true;
            if let Some(dir) = out_dir {
                let p = dir.join(RESULTS_FILE);
                write_results(&p, &series)?;
                manifest.results_digest = Some(file_digest(&p)?);
                manifest.artifacts.results = Some(p);
                manifest.save(&dir.join(MANIFEST_FILE))?;
            }
            Ok(RunOutcome {
                series,
                manifest,
                learner,
            })
        }
        Err(e) => {
            manifest.error = Some(e.to_string());
            if let Some(dir) = out_dir {
                manifest.save(&dir.join(MANIFEST_FILE))?;
            }
            Err(e)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn drive(
    run_id: &str,
    config: &SequenceConfig,
    catalog: &TaskCatalog,
    learner: &mut Box<dyn Learner>,
    ubs: &UpperBoundTable,
    registry: &MetricRegistry,
    out_dir: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<RelativeGainSeries> {
    let schedule = &config.schedule;
    let rcfg = RehearsalConfig::new(config.r, config.data_seed)?;
    let mut series = RelativeGainSeries {
        run_id: run_id.to_string(),
        ..Default::default()
    };
    for id in schedule.all_task_ids() {
        let spec = &catalog.get(id)?.spec;
        if let Some(m) = spec.metric_ids.first() {
            series.primary_metric.insert(id.clone(), m.clone());
        }
    }

    let mut initial: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut record = |series: &mut RelativeGainSeries, step: u64, training: Option<&str>, scores: Vec<TaskMetric>| -> Result<()> {
        for s in scores {
            let key = (s.task_id.clone(), s.value.metric_id.clone());
            let raw = s.value.value;
            let init = *initial.entry(key).or_insert(raw);
            series.points.push(SeriesPoint {
                run_id: run_id.to_string(),
                sequence_step: step,
                rg: relative_gain(raw, ubs.get(&s.task_id, &s.value.metric_id)?)?,
                delta_vs_initial: (init > 0.0).then(|| (raw - init) / init),
                task_id: s.task_id,
                metric_id: s.value.metric_id,
                raw,
                training_task: training.map(str::to_string),
            });
        }
        Ok(())
    };

    let scores = evaluate_all_tasks(learner.as_ref(), schedule, catalog, registry, &config.eval)?;
    record(&mut series, 0, None, scores)?;

    let mut buffers: Vec<RehearsalBuffer> = Vec::new();
    let mut step = 0u64;
    for (i, task_id) in schedule.task_ids.iter().enumerate() {
        let train = catalog.capped_train(task_id, config.data_seed)?;
        let stream = compose_training_stream(
            &train,
            &buffers,
            config.hyper.batch_size,
            config.hyper.epochs,
            text::derive_seed(config.data_seed, &format!("step/{i}")),
        )?;
        let mut origins = BTreeMap::new();
        for it in stream.items().take(stream.items_per_epoch) {
            *origins.entry(it.origin_task_id.clone()).or_insert(0) += 1;
        }
        manifest.stream_origins.push(origins);

        let chunk = config.cadence.chunk(stream.total_steps());
        for batches in stream.batches.chunks(chunk) {
            let part = TrainStream::from_batches(batches.to_vec());
            learner
                .train_on_stream(&part, &config.hyper)
                .map_err(|e| Error::task(task_id, e.to_string()))?;
            step += batches.len() as u64;
            let scores = evaluate_all_tasks(learner.as_ref(), schedule, catalog, registry, &config.eval)?;
            record(&mut series, step, Some(task_id), scores)?;
        }
        series.task_end_steps.push((task_id.clone(), step));
        log::info!("{run_id}: finished {task_id} at step {step}");

        if let Some(dir) = out_dir {
            let p = dir.join("snapshots").join(format!("after_{i}_{task_id}.snapshot"));
            fs::write(&p, learner.snapshot()).map_err(|e| Error::io(&p, e))?;
            manifest.artifacts.snapshots.push(p);
        }

        let spec = &catalog.get(task_id)?.spec;
        if config.r > 0.0 && spec.rehearsable && !spec.zero_shot_only {
            let buffer = match out_dir {
                Some(dir) => {
                    let (b, p) = load_or_build_buffer(&dir.join("buffers"), &train, spec, &rcfg)?;
                    manifest.artifacts.buffers.push(p);
                    b
                }
                None => build_rehearsal_buffer(&train, spec, &rcfg)?,
            };
            buffers.push(buffer);
        }
    }
    Ok(series)
}

/// Writes one `{run_id, sequence_step, task_id, metric_id, raw, rg, ...}` line per point.
pub fn write_results(path: &Path, series: &RelativeGainSeries) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for p in &series.points {
        let line = serde_json::to_string(p)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<SeriesPoint>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Trains a clone of `base` on the shuffled union of `task_ids` for exactly
/// `total_steps` batches (reshuffling at every pass over the union).
pub fn run_joint_training(
    task_ids: &[String],
    catalog: &TaskCatalog,
    base: &dyn Learner,
    hyper: &TrainHyper,
    total_steps: usize,
    data_seed: u64,
) -> Result<Box<dyn Learner>> {
    hyper.validate()?;
    let mut examples = Vec::new();
    for id in task_ids {
        examples.extend(catalog.capped_train(id, data_seed)?.examples);
    }
    let union = Dataset::new("joint", crate::corpus::Split::Train, examples);
    let per_epoch = union.len().div_ceil(hyper.batch_size);
    let epochs = total_steps.div_ceil(per_epoch.max(1));
    let mut stream = compose_training_stream(&union, &[], hyper.batch_size, epochs, text::derive_seed(data_seed, "joint"))?;
    stream.batches.truncate(total_steps);
    let mut learner = base.boxed_clone();
    learner.train_on_stream(&stream, hyper)?;
    Ok(learner)
}

/// Total batches a sequential run with fraction `r` takes, without training.
pub fn sequence_step_budget(config: &SequenceConfig, catalog: &TaskCatalog) -> Result<usize> {
    let rcfg = RehearsalConfig::new(config.r, config.data_seed)?;
    let mut replay = 0usize;
    let mut total = 0usize;
    for id in &config.schedule.task_ids {
        let n = catalog.capped_train(id, config.data_seed)?.len();
        total += config.hyper.epochs * (n + replay).div_ceil(config.hyper.batch_size);
        let spec = &catalog.get(id)?.spec;
        if spec.rehearsable && !spec.zero_shot_only {
            replay += rcfg.buffer_size(n);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"r": 0.01, "hyper": {"epochs": 2, "l2": 0.0}}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"hyper": {"l2": 0.0, "epochs": 2}, "r": 0.01}"#).unwrap();
        assert_eq!(canonical_digest(&a), canonical_digest(&b));
        let c: serde_json::Value = serde_json::from_str(r#"{"hyper": {"l2": 0.0, "epochs": 3}, "r": 0.01}"#).unwrap();
        assert_ne!(canonical_digest(&a), canonical_digest(&c));
    }

    #[test]
    fn series_from_points() {
        let pt = |step, task: &str, metric: &str, training: Option<&str>| SeriesPoint {
            run_id: "r".into(),
            sequence_step: step,
            task_id: task.into(),
            metric_id: metric.into(),
            raw: 0.5,
            rg: 0.5,
            delta_vs_initial: None,
            training_task: training.map(str::to_string),
        };
        let s = RelativeGainSeries::from_points(vec![
            pt(0, "a", "exact_match", None),
            pt(0, "b", "exact_match", None),
            pt(0, "b", "constraint", None),
            pt(5, "a", "exact_match", Some("a")),
            pt(10, "a", "exact_match", Some("a")),
            pt(20, "a", "exact_match", Some("b")),
        ])
        .unwrap();
        assert_eq!(s.task_end_steps, vec![("a".to_string(), 10), ("b".to_string(), 20)]);
        assert_eq!(s.primary_metric["b"], "exact_match");
        assert!(RelativeGainSeries::from_points(Vec::new()).is_err());
    }

    #[test]
    fn cadence_chunks() {
        assert_eq!(Cadence::PerTask(4).chunk(10), 3);
        assert_eq!(Cadence::PerTask(4).chunk(2), 1);
        assert_eq!(Cadence::EveryBatches(5).chunk(12), 5);
    }
}
