//! The experimental protocol: upper bounds, relative gain, the sequential
//! run loop, order-invariance comparison and compositionality sweeps.

mod analysis;
mod plot;
mod protocol;
mod sequence;

pub use analysis::{compositionality_sweep, order_invariance_report, OrderReport, SweepRow};
pub use plot::{series_csv, series_svg};
pub use protocol::{
    compute_upper_bound, compute_upper_bounds, evaluate_all_tasks, evaluate_task, forgetting_flag, generate_all,
    relative_gain, EvalConfig, TaskCatalog, TaskMetric, UpperBound, UpperBoundTable, DEFAULT_EVAL_CAP,
    FORGETTING_THRESHOLD,
};
pub use sequence::{
    canonical_digest, file_digest, read_results, run_continual_sequence, run_joint_training, sequence_step_budget,
    write_results, Artifacts, Cadence, RelativeGainSeries, RunManifest, RunOutcome, SequenceConfig, SeriesPoint,
    BASE_SNAPSHOT_FILE, MANIFEST_FILE, RESULTS_FILE,
};
