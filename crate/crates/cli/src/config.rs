//! Declarative run configuration.
//!
//! Precedence, highest first: command-line flags, the TOML file, built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use rehearsekit::evaluation::{Cadence, EvalConfig, SequenceConfig, TaskCatalog};
use rehearsekit::learner::{TrainHyper, HASHED_NGRAM};
use rehearsekit::rehearsal::{build_task_schedule, Direction, RehearsalConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory written by `rehearse fixtures`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
    pub tasks: Vec<String>,
    #[serde(default)]
    pub zero_shot: Vec<String>,
    #[serde(default = "forward")]
    pub direction: Direction,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "default_learner")]
    pub learner: String,
    #[serde(default = "default_hash_bits")]
    pub hash_bits: u32,
    /// Evaluations per scheduled task.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub hyper: HyperSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
    pub learner: u64,
    pub eval: u64,
    pub ub: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 11,
            learner: 1,
            eval: 3,
            ub: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
}

/// Tuned for the synthetic fixture suite.
impl Default for HyperSection {
    fn default() -> Self {
        Self {
            learning_rate: 2.0,
            epochs: 4,
            batch_size: 16,
            l2: 0.0005,
        }
    }
}

impl HyperSection {
    pub fn train(&self) -> TrainHyper {
        TrainHyper {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            l2: self.l2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub eval_cap: usize,
    pub max_len: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            eval_cap: 200,
            max_len: 16,
        }
    }
}

fn forward() -> Direction {
    Direction::Forward
}

fn default_learner() -> String {
    HASHED_NGRAM.into()
}

fn default_hash_bits() -> u32 {
    18
}

fn default_cadence() -> usize {
    4
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&body).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.tasks.is_empty() {
            bail!("config lists no tasks");
        }
        RehearsalConfig::new(self.r, self.seeds.data)?;
        self.hyper.train().validate()?;
        if self.cadence == 0 {
            bail!("cadence must be >= 1");
        }
        if !(8..=30).contains(&self.hash_bits) {
            bail!("hash_bits must be in 8..=30");
        }
        if self.eval.eval_cap == 0 || self.eval.max_len == 0 {
            bail!("eval_cap and max_len must be >= 1");
        }
        Ok(())
    }

    /// Checks every task id against the loaded suite.
    pub fn check_tasks(&self, catalog: &TaskCatalog) -> anyhow::Result<()> {
        for id in self.tasks.iter().chain(&self.zero_shot) {
            catalog.get(id)?;
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            eval_cap: self.eval.eval_cap,
            seed: self.seeds.eval,
            max_len: self.eval.max_len,
        }
    }

    pub fn sequence_config(&self) -> anyhow::Result<SequenceConfig> {
        Ok(SequenceConfig {
            schedule: build_task_schedule(&self.tasks, &self.zero_shot, self.direction)?,
            r: self.r,
            hyper: self.hyper.train(),
            cadence: Cadence::PerTask(self.cadence),
            eval: self.eval_config(),
            data_seed: self.seeds.data,
        })
    }

    /// Scheduled and zero-shot tasks, the set upper bounds are needed for.
    pub fn all_tasks(&self) -> Vec<String> {
        self.tasks.iter().chain(&self.zero_shot).cloned().collect()
    }
}
