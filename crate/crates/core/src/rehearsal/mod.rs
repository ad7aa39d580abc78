//! Replay buffers and the augmented training stream.
//!
//! At sequence step `i` the learner trains on `D_i` plus a frozen sample of
//! fraction `r` of every earlier task `D_j, j < i`. With `r = 1` this is plain
//! multi-task training on everything seen so far.

mod buffer;
mod stream;

pub use buffer::{build_rehearsal_buffer, load_or_build_buffer, RehearsalBuffer, RehearsalConfig};
pub use stream::{build_task_schedule, compose_training_stream, Direction, StreamItem, TaskSchedule, TrainStream};
