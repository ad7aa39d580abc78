use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::buffer::RehearsalBuffer;
use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};
use crate::text;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub example: Example,
    pub origin_task_id: String,
}

/// Shuffled, batched training items for one sequence step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStream {
    pub batches: Vec<Vec<StreamItem>>,
    pub batch_size: usize,
    pub epochs: usize,
    pub items_per_epoch: usize,
}

impl TrainStream {
    pub fn total_steps(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &StreamItem> {
        self.batches.iter().flatten()
    }

    /// Builds a stream from pre-ordered batches (used by external learners and tests).
    pub fn from_batches(batches: Vec<Vec<StreamItem>>) -> Self {
        let batch_size = batches.iter().map(Vec::len).max().unwrap_or(0);
        let items_per_epoch = batches.iter().map(Vec::len).sum();
        Self {
            batches,
            batch_size,
            epochs: 1,
            items_per_epoch,
        }
    }
}

/// Composes the current task's data with every replay buffer.
///
/// Each epoch shuffles the union `current ∪ buffers` and cuts it into batches
/// of `batch_size` (the last batch of an epoch may be short). The union is
/// put in a canonical order before shuffling, so the result does not depend
/// on the order of `buffers`.
pub fn compose_training_stream(
    current: &Dataset,
    buffers: &[RehearsalBuffer],
    batch_size: usize,
    epochs: usize,
    seed: u64,
) -> Result<TrainStream> {
    if current.is_empty() {
        return Err(Error::EmptyDataset(format!("current task `{}` has no data", current.task_id)));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be >= 1"));
    }
    let mut sorted: Vec<&RehearsalBuffer> = buffers.iter().collect();
    sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let mut union: Vec<StreamItem> = current
        .iter()
        .map(|e| StreamItem {
            example: e.clone(),
            origin_task_id: current.task_id.clone(),
        })
        .collect();
    for b in sorted {
        union.extend(b.examples.iter().map(|e| StreamItem {
            example: e.clone(),
            origin_task_id: b.task_id.clone(),
        }));
    }

    let items_per_epoch = union.len();
    let mut rng = text::rng(seed, &format!("stream/{}", current.task_id));
    let mut batches = Vec::with_capacity(epochs * items_per_epoch.div_ceil(batch_size));
    for _ in 0..epochs {
        let mut order = union.clone();
        order.shuffle(&mut rng);
        let mut it = order.into_iter().peekable();
        while it.peek().is_some() {
            batches.push(it.by_ref().take(batch_size).collect());
        }
    }
    Ok(TrainStream {
        batches,
        batch_size,
        epochs,
        items_per_epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

/// Ordered training tasks plus evaluation-only zero-shot tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub task_ids: Vec<String>,
    pub zero_shot_eval_ids: Vec<String>,
    pub direction: Direction,
}

impl TaskSchedule {
    /// Scheduled tasks followed by zero-shot tasks.
    pub fn all_task_ids(&self) -> impl Iterator<Item = &String> {
        self.task_ids.iter().chain(self.zero_shot_eval_ids.iter())
    }
}

pub fn build_task_schedule(
    task_ids: &[String],
    zero_shot_ids: &[String],
    direction: Direction,
) -> Result<TaskSchedule> {
    if task_ids.is_empty() {
        return Err(Error::invalid("task schedule must not be empty"));
    }
    let mut seen = std::collections::HashSet::new();
    for id in task_ids.iter().chain(zero_shot_ids) {
        if !seen.insert(id.as_str()) {
            if task_ids.contains(id) && zero_shot_ids.contains(id) {
                return Err(Error::invalid(format!("task `{id}` is both scheduled and zero-shot")));
            }
            return Err(Error::invalid(format!("task `{id}` listed twice")));
        }
    }
    let mut ordered = task_ids.to_vec();
    if direction == Direction::Reversed {
        ordered.reverse();
    }
    Ok(TaskSchedule {
        task_ids: ordered,
        zero_shot_eval_ids: zero_shot_ids.to_vec(),
        direction,
    })
}
