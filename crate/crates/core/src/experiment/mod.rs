//! Experiment orchestration: config, per-(entity, seed) pipeline cells,
//! aggregation and result files.

mod compare;
mod config;
mod output;
mod run;

pub use compare::{compare_metrics, compare_row, CompareRow};
pub use config::{
    CsvEntity, DatasetConfig, DiagnosisConfig, ExperimentConfig, ScoringConfig, ScoringKind, ThresholdConfig,
    ENV_OUTPUT_DIR, ENV_WORKERS,
};
pub use output::{
    emit_results, results_csv, results_json, summary_table, OutputFormat, METADATA_JSON, RESULTS_CSV, RESULTS_JSON,
    SUMMARY_TXT,
};
pub use run::{
    aggregate, load_results, run_experiment, score_entity, Aggregates, CellRecord, CellScores, CellStatus, CellTiming,
    DiagnosisScores, ResultsRecord, RunMetadata, RunOutput, RESULTS_SCHEMA_VERSION,
};
