use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{resample_to_cap, subsample_eval_set, Dataset, FixtureSuiteTask, TaskSpec};
use crate::error::{Error, Result};
use crate::learner::{snapshot_id, Learner, TrainHyper};
use crate::metrics::{MetricRegistry, MetricValue, Scored};
use crate::rehearsal::{compose_training_stream, TaskSchedule};
use crate::text;

/// Default per-task evaluation subset size.
pub const DEFAULT_EVAL_CAP: usize = 1000;
/// Forgetting tolerance: a task is retained while RG stays within 2% of its bound.
pub const FORGETTING_THRESHOLD: f64 = 0.02;

/// Every task of an experiment with both splits, keyed by task id.
#[derive(Debug, Clone, Default)]
pub struct TaskCatalog {
    tasks: BTreeMap<String, FixtureSuiteTask>,
}

impl TaskCatalog {
    pub fn new(tasks: Vec<FixtureSuiteTask>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tasks {
            t.spec.validate()?;
            let id = t.spec.task_id.clone();
            if map.insert(id.clone(), t).is_some() {
                return Err(Error::invalid(format!("task `{id}` defined twice")));
            }
        }
        Ok(Self { tasks: map })
    }

    pub fn get(&self, task_id: &str) -> Result<&FixtureSuiteTask> {
        self.tasks.get(task_id).ok_or_else(|| Error::Unknown {
            kind: "task",
            name: task_id.to_string(),
            known: self.tasks.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &String> {
        self.tasks.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &FixtureSuiteTask> {
        self.tasks.values()
    }

    /// Every split of every task, for building a learner vocabulary.
    pub fn all_datasets(&self) -> Vec<&Dataset> {
        self.tasks.values().flat_map(|t| [&t.train, &t.test]).collect()
    }

    /// Training split resampled to the task's cap.
    pub fn capped_train(&self, task_id: &str, seed: u64) -> Result<Dataset> {
        let t = self.get(task_id)?;
        resample_to_cap(&t.train, t.spec.cap, text::derive_seed(seed, &format!("cap/{task_id}")))
    }
}

/// Decoding and subsetting knobs shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub eval_cap: usize,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eval_cap: DEFAULT_EVAL_CAP,
            seed: 0,
            max_len: 32,
        }
    }
}

/// One task's score on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetric {
    pub task_id: String,
    #[serde(flatten)]
    pub value: MetricValue,
}

/// Greedy predictions for `examples`, generated in parallel.
pub fn generate_all(learner: &dyn Learner, inputs: &[&str], max_len: usize) -> Vec<String> {
    inputs.par_iter().map(|i| learner.generate(i, max_len)).collect()
}

/// Scores one task on its (subsampled) test split.
pub fn evaluate_task(
    learner: &dyn Learner,
    spec: &TaskSpec,
    test: &Dataset,
    registry: &MetricRegistry,
    cfg: &EvalConfig,
) -> Result<Vec<MetricValue>> {
    if test.is_empty() {
        return Err(Error::task(&spec.task_id, "test split is empty"));
    }
    let subset = subsample_eval_set(test, cfg.eval_cap, text::derive_seed(cfg.seed, &format!("eval/{}", spec.task_id)))?;
    let inputs: Vec<&str> = subset.iter().map(|e| e.input_text.as_str()).collect();
    let predictions = generate_all(learner, &inputs, cfg.max_len);
    let items: Vec<Scored<'_>> = subset
        .iter()
        .zip(&predictions)
        .map(|(example, p)| Scored {
            example,
            prediction: p,
        })
        .collect();
    registry
        .score(&spec.metric_ids, &items)
        .map_err(|e| Error::task(&spec.task_id, e.to_string()))
}

/// Scores every scheduled and zero-shot task, in schedule order.
pub fn evaluate_all_tasks(
    learner: &dyn Learner,
    schedule: &TaskSchedule,
    catalog: &TaskCatalog,
    registry: &MetricRegistry,
    cfg: &EvalConfig,
) -> Result<Vec<TaskMetric>> {
    let mut out = Vec::new();
    for id in schedule.all_task_ids() {
        let t = catalog.get(id)?;
        for value in evaluate_task(learner, &t.spec, &t.test, registry, cfg)? {
            out.push(TaskMetric {
                task_id: id.clone(),
                value,
            });
        }
    }
    Ok(out)
}

/// `raw / ub`. Values above 1 are allowed.
pub fn relative_gain(raw: f64, ub: f64) -> Result<f64> {
    if !(ub > 0.0) || !ub.is_finite() {
        return Err(Error::invalid(format!("upper bound must be positive, got {ub}")));
    }
    Ok(raw / ub)
}

/// True when the task counts as retained: `final_rg >= 1 - threshold`.
/// The boundary is inclusive.
pub fn forgetting_flag(final_rg: f64, threshold: f64) -> bool {
    debug_assert!(threshold > 0.0 && threshold < 1.0, "threshold in (0, 1)");
    final_rg >= 1.0 - threshold - 1e-12
}

/// Per-(task, metric) upper bounds with the snapshot each came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundTable {
    pub entries: BTreeMap<String, BTreeMap<String, f64>>,
    /// Task id → snapshot id of the single-task learner.
    pub snapshots: BTreeMap<String, String>,
    /// Snapshot id of the shared starting point.
    pub base_snapshot: String,
}

impl UpperBoundTable {
    pub fn get(&self, task_id: &str, metric_id: &str) -> Result<f64> {
        self.entries
            .get(task_id)
            .and_then(|m| m.get(metric_id))
            .copied()
            .ok_or_else(|| Error::task(task_id, format!("no upper bound for metric `{metric_id}`")))
    }

    /// Fails unless every listed task has a positive bound for each of its metrics.
    pub fn check_covers<'a>(&self, ids: impl IntoIterator<Item = &'a String>, catalog: &TaskCatalog) -> Result<()> {
        for id in ids {
            for m in &catalog.get(id)?.spec.metric_ids {
                let ub = self.get(id, m)?;
                if !(ub > 0.0) {
                    return Err(Error::task(id, format!("upper bound for `{m}` is {ub}; relative gain undefined")));
                }
            }
        }
        Ok(())
    }
}

/// Single-task result: metric values and the trained learner.
pub struct UpperBound {
    pub task_id: String,
    pub values: Vec<MetricValue>,
    pub snapshot_id: String,
    pub learner: Box<dyn Learner>,
}

/// Trains a clone of `base` on one task alone and scores it on that task.
pub fn compute_upper_bound(
    task_id: &str,
    catalog: &TaskCatalog,
    base: &dyn Learner,
    hyper: &TrainHyper,
    registry: &MetricRegistry,
    eval: &EvalConfig,
    seed: u64,
) -> Result<UpperBound> {
    hyper.validate()?;
    let t = catalog.get(task_id)?;
    let train = catalog.capped_train(task_id, seed)?;
    let stream = compose_training_stream(&train, &[], hyper.batch_size, hyper.epochs, text::derive_seed(seed, "ub"))?;
    let mut learner = base.boxed_clone();
    learner
        .train_on_stream(&stream, hyper)
        .map_err(|e| Error::task(task_id, e.to_string()))?;
    let values = evaluate_task(learner.as_ref(), &t.spec, &t.test, registry, eval)?;
    Ok(UpperBound {
        task_id: task_id.to_string(),
        values,
        snapshot_id: snapshot_id(&learner.snapshot()),
        learner,
    })
}

/// Upper bounds for `task_ids`, computed in parallel from clones of `base`.
pub fn compute_upper_bounds(
    task_ids: &[String],
    catalog: &TaskCatalog,
    base: &dyn Learner,
    hyper: &TrainHyper,
    registry: &MetricRegistry,
    eval: &EvalConfig,
    seed: u64,
) -> Result<UpperBoundTable> {
    let results: Vec<UpperBound> = task_ids
        .par_iter()
        .map(|id| compute_upper_bound(id, catalog, base, hyper, registry, eval, seed))
        .collect::<Result<_>>()?;
    let mut table = UpperBoundTable {
        base_snapshot: snapshot_id(&base.snapshot()),
        ..Default::default()
    };
    for ub in results {
        table.snapshots.insert(ub.task_id.clone(), ub.snapshot_id);
        table
            .entries
            .insert(ub.task_id, ub.values.into_iter().map(|v| (v.metric_id, v.value)).collect());
    }
    Ok(table)
}
