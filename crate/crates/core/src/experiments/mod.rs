//! Batch harness: dataset generation, multi-start fitting, run records and summaries.

pub mod io;
pub mod plan;
pub mod record;
pub mod runner;
pub mod summary;

pub use io::{
    append_records, evaluate_factors, fit_dataset, generate_datasets, read_records, reproduce, summarize_files,
    write_summary, Evaluation, FitRequest, Manifest, ManifestEntry, Reproduction,
};
pub use plan::{DatasetSpec, ExperimentPlan, SolverSettings, DEFAULT_LAMBDA_B_GRID};
pub use record::{Group, Method, RunRecord};
pub use runner::{fit_method, run_plan, sort_records, FitOutcome, FittedModel, RunContext};
pub use summary::{quantile, summarize, BestRow, Summary, SummaryRow};
