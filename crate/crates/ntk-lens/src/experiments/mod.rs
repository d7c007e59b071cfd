//! Experiment orchestration: configuration, sweep execution, ensembling,
//! power-law fitting, transition detection, and record persistence.
//!
//! The three experiment families share one machinery: a sweep axis
//! (hidden width, training-set size, or keep fraction), an ensemble of
//! seeded members per sweep value, and per-run dynamics instrumentation.
//! Records land in a JSON-lines file plus a summary CSV; analysis reads
//! them back and fits scaling laws.

pub mod config;
pub mod fit;
pub mod persist;
pub mod runner;

pub use config::{
    DatasetConfig, DatasetKind, EnsembleConfig, ExperimentConfig, ModelConfig, OptimizerConfig,
    OptimizerKind, OutputConfig, RunConfig, SweepAxis, SweepConfig,
};
pub use fit::{detect_transition, fit_power_law, PowerLawFit, TransitionReport};
pub use persist::{
    append_record, read_records, write_records, write_summary_csv, RecordsFileHeader, RunRecord,
};
pub use runner::{
    aggregate_ensemble, aggregate_sweep, budget_warnings, data_root, mix_seed,
    observation_adaptation_series, run_ensemble, run_single, run_sweep, EnsemblePoint, MetricStat,
};
