//! The learner contract and the built-in hashed n-gram learner.
//!
//! Learners are registered by name in a [`LearnerRegistry`]; the harness only
//! talks to them through the [`Learner`] trait.

mod features;
mod hashed;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use features::{FeatureConfig, InputContext};
pub use hashed::{HashedLearner, Param, BOS, BOS_ID, EOS, EOS_ID, UNK, UNK_ID};

use crate::corpus::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rehearsal::{compose_training_stream, TrainStream};

pub const HASHED_NGRAM: &str = "hashed-ngram";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 4,
            batch_size: 16,
            l2: 0.0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be a finite non-negative number"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.l2 >= 0.0 && self.learning_rate * self.l2 < 1.0) {
            return Err(Error::invalid("l2 must be >= 0 with learning_rate * l2 < 1"));
        }
        Ok(())
    }
}

/// Anything the harness can train, decode from and checkpoint.
pub trait Learner: Send + Sync {
    /// Registry name of the implementation.
    fn kind(&self) -> &str;

    /// Trains on every batch in order; returns one loss value per batch.
    fn train_on_stream(&mut self, stream: &TrainStream, hyper: &TrainHyper) -> Result<Vec<f64>>;

    /// Greedy decoding of at most `max_len` tokens.
    fn generate(&self, input_text: &str, max_len: usize) -> String;

    fn snapshot(&self) -> Vec<u8>;

    fn boxed_clone(&self) -> Box<dyn Learner>;

    fn step_count(&self) -> u64;
}

/// Short content hash identifying a snapshot.
pub fn snapshot_id(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

/// Constructs and restores one learner implementation.
pub trait LearnerFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn init(&self, seed: u64, vocab_source: &[&Dataset]) -> Result<Box<dyn Learner>>;
    fn restore(&self, bytes: &[u8]) -> Result<Box<dyn Learner>>;
}

pub struct HashedNgramFactory {
    pub features: FeatureConfig,
}

impl LearnerFactory for HashedNgramFactory {
    fn name(&self) -> &'static str {
        HASHED_NGRAM
    }

    fn init(&self, seed: u64, vocab_source: &[&Dataset]) -> Result<Box<dyn Learner>> {
        Ok(Box::new(HashedLearner::new(seed, vocab_source, self.features)?))
    }

    fn restore(&self, bytes: &[u8]) -> Result<Box<dyn Learner>> {
        Ok(Box::new(HashedLearner::from_bytes(bytes)?))
    }
}

pub struct LearnerRegistry {
    factories: BTreeMap<&'static str, Box<dyn LearnerFactory>>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(Box::new(HashedNgramFactory {
            features: FeatureConfig::default(),
        }));
        r
    }
}

impl LearnerRegistry {
    pub fn register(&mut self, factory: Box<dyn LearnerFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn get(&self, name: &str) -> Result<&dyn LearnerFactory> {
        self.factories.get(name).map(|f| f.as_ref()).ok_or_else(|| Error::Unknown {
            kind: "learner",
            name: name.to_string(),
            known: self.factories.keys().copied().collect::<Vec<_>>().join(", "),
        })
    }
}

/// Fresh hashed n-gram learner with all-zero weights.
pub fn init_learner(seed: u64, vocab_source: &[&Dataset], features: FeatureConfig) -> Result<HashedLearner> {
    HashedLearner::new(seed, vocab_source, features)
}

/// Trains on the shuffled union of `mixture` for `hyper.epochs` epochs.
/// Returns the per-batch losses (empty when `epochs == 0`).
pub fn pretrain_on_mixture(
    learner: &mut dyn Learner,
    mixture: &[&Dataset],
    hyper: &TrainHyper,
    seed: u64,
) -> Result<Vec<f64>> {
    hyper.validate()?;
    if hyper.epochs == 0 {
        return Ok(Vec::new());
    }
    let examples = mixture.iter().flat_map(|d| d.examples.iter().cloned()).collect();
    let union = Dataset::new("pretrain-mixture", Split::Train, examples);
    let stream = compose_training_stream(&union, &[], hyper.batch_size, hyper.epochs, seed)?;
    learner.train_on_stream(&stream, hyper)
}
