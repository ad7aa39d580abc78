//! Rehearsal-based continual learning harness.
//!
//! Tasks are rendered as natural-language instructions, learned one after the
//! other by a pluggable sequence learner, and kept alive by replaying a small
//! frozen sample of every earlier task's training data. The evaluation side
//! normalizes scores by per-task upper bounds and tracks forgetting.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod learner;
pub mod metrics;
pub mod rehearsal;
pub mod text;

pub use error::{Error, Result};
