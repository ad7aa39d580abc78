//! Dataset ingestion, instruction rendering, constraint derivation,
//! instruction composition, capping and synthetic fixtures.

pub mod builtin;
pub mod compose;
pub mod constraint;
pub mod fixtures;
pub mod io;
pub mod sampling;
pub mod template;
mod types;

pub use compose::{compose_instruction, Addition};
pub use constraint::{derive_headline_constraint, word_tokens};
pub use fixtures::{generate_synthetic_suite, FixtureConfig, FixtureSuiteTask, FixtureTask};
pub use io::{load_dataset, save_dataset};
pub use sampling::{resample_to_cap, subsample_eval_set};
pub use template::render_instruction;
pub use types::*;
