//! Experiment orchestration: configs, training runs, checkpoints, reports
//! and the verification suite.

mod checkpoint;
mod config;
mod data;
mod inspect;
mod metrics;
mod run;
mod verify;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{ExperimentConfig, ModelConfig, OutputConfig, Precision, Seeds, TaskConfig, TrainConfig};
pub use data::{load_task, TaskData};
pub use inspect::{analyze_checkpoint, materialize, summarize_runs, write_summary_csv, AnalyzeOptions, Analysis, SummaryRow};
pub use metrics::{read_metrics_csv, MetricRow, MetricsWriter, RunMetrics, METRICS_HEADER};
pub use run::{
    check_output_dir, evaluate, evaluate_split, initial_network, run_experiment, EvalMetrics, RunOutcome, RunStatus,
    CHECKPOINT_FILE, CONFIG_ECHO, METRICS_FILE, PERMUTATION_FILE, STATUS_FILE, TIMING_FILE,
};
pub use verify::{check_aee, check_carry_closed, check_expansion, check_gradients, check_rin_irnn, verify_suite, CheckResult};
