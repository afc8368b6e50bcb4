//! Experiment harness around the factorization library: JSON-configured
//! single fits, (ρ, φ) hyperparameter sweeps with per-cell seeding, and
//! plot-ready CSV emission.

pub mod config;
pub mod run;

pub use config::{FitConfig, LambdaRule, ModelConfig, SweepConfig};
pub use run::{
    aggregate, aggregate_path, emit_plot_data, run_fit, run_sweep, write_aggregate_csv,
    write_sweep_csv, AggregateRow, FitSummary, SweepRecord, AGGREGATE_HEADER, PLOT_HEADER,
    SWEEP_HEADER,
};
