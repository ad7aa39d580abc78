use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{load_examples, save_examples};
use crate::corpus::{Dataset, Example, Split, TaskSpec};
use crate::error::{Error, Result};
use crate::text;

/// How much of each finished task is kept for replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RehearsalConfig {
    /// Fraction of a task's (capped) training set kept, in `[0, 1]`.
    pub r: f64,
    pub seed: u64,
}

impl RehearsalConfig {
    pub fn new(r: f64, seed: u64) -> Result<Self> {
        let cfg = Self { r, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.r) || !self.r.is_finite() {
            return Err(Error::invalid(format!("rehearsal fraction must be in [0, 1], got {}", self.r)));
        }
        Ok(())
    }

    /// `floor(r * n)`, at least 1 when `r > 0`, at most `n`.
    ///
    /// A 1e-9 slack absorbs binary rounding so that e.g. 0.25% of 100000 is 250.
    pub fn buffer_size(&self, n: usize) -> usize {
        if self.r <= 0.0 || n == 0 {
            return 0;
        }
        let k = (self.r * n as f64 + 1e-9).floor() as usize;
        k.clamp(1, n)
    }
}

/// A frozen replay sample of one finished task.
#[derive(Debug, Clone, PartialEq)]
pub struct RehearsalBuffer {
    pub task_id: String,
    pub examples: Vec<Example>,
    pub source_size: usize,
}

impl RehearsalBuffer {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `buffer_<task>_<r>_<seed>.jsonl`
    pub fn file_name(task_id: &str, cfg: &RehearsalConfig) -> String {
        format!("buffer_{task_id}_{}_{}.jsonl", cfg.r, cfg.seed)
    }
}

/// Samples `buffer_size(|prior|)` examples uniformly without replacement.
/// The sample keeps the dataset's order.
pub fn build_rehearsal_buffer(prior: &Dataset, spec: &TaskSpec, cfg: &RehearsalConfig) -> Result<RehearsalBuffer> {
    cfg.validate()?;
    if spec.zero_shot_only || !spec.rehearsable {
        return Err(Error::ZeroShotRehearsal(spec.task_id.clone()));
    }
    if prior.split != Split::Train {
        return Err(Error::task(&prior.task_id, "rehearsal buffers sample the train split"));
    }
    let k = cfg.buffer_size(prior.len());
    let mut rng = text::rng(cfg.seed, &format!("buffer/{}", prior.task_id));
    let mut picked = index::sample(&mut rng, prior.len(), k).into_vec();
    picked.sort_unstable();
    Ok(RehearsalBuffer {
        task_id: prior.task_id.clone(),
        examples: picked.into_iter().map(|i| prior.examples[i].clone()).collect(),
        source_size: prior.len(),
    })
}

/// Loads the persisted buffer from `dir` when present, otherwise samples and persists it.
pub fn load_or_build_buffer(
    dir: &Path,
    prior: &Dataset,
    spec: &TaskSpec,
    cfg: &RehearsalConfig,
) -> Result<(RehearsalBuffer, PathBuf)> {
    let path = dir.join(RehearsalBuffer::file_name(&prior.task_id, cfg));
    if path.exists() {
        if spec.zero_shot_only || !spec.rehearsable {
            return Err(Error::ZeroShotRehearsal(spec.task_id.clone()));
        }
        let examples = load_examples(&path)?;
        return Ok((
            RehearsalBuffer {
                task_id: prior.task_id.clone(),
                examples,
                source_size: prior.len(),
            },
            path,
        ));
    }
    let buffer = build_rehearsal_buffer(prior, spec, cfg)?;
    save_examples(&path, &buffer.examples)?;
    Ok((buffer, path))
}
