//! Experiment runner: configuration, the training loop, ablation sweeps and
//! report files.

mod config;
mod report;
mod run;
mod sweep;

pub use config::{case_one, CsvDataset, DatasetSpec, GradMode, RunConfig};
pub use report::{
    diag_jsonl, emit_report, read_jsonl, render_markdown, results_csv, results_jsonl, summary_table,
    write_bytes, ReportFormat, SummaryRow, SummaryTable, DIAG_JSONL, REPORT_MD, RESULTS_CSV,
    RESULTS_JSONL,
};
pub use run::{
    resolve_tasks, run_experiment, run_seed, sub_seed, train_seed, SeedArtifacts, DiagEvent, MixSet, ParetoSummary,
    PolicyResult, RunOutput, RunResult, SeedResult, TargetResult, Task,
};
pub use sweep::{ablation_sweep, sweep_configs, sweep_csv, SweepAxis, SweepResult, SweepRow, COMPONENTS, DEFAULT_ALPHAS};
