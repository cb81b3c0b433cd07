//! End-to-end experiment runs, grid sweeps and result reports.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{BackendKind, DatasetConfig, ExperimentConfig, GenerationConfig, LinkTrainingConfig};
pub use report::{emit_report, read_json_report, AggregateRow, DetailRow, Report, ReportFormat};
pub use run::{
    git_style_hash, load_vocab, mean_std, run_baseline, run_llm4ng, write_edges, Method, RunProvenance, RunResult,
    Runner, SeedRun, StageHashes,
};
pub use sweep::{sweep, SweepFailure, SweepGrid, SweepOutcome};
