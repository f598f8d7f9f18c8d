//! Simulation driver: configuration, replications, aggregation and the
//! per-subcommand outputs used by the binary.

pub mod aggregate;
pub mod config;
pub mod runner;
pub mod selftest;

pub use aggregate::{
    aggregate, fit_line, fit_slope, write_aggregate_csv, AggregateRecord, Column, MetricRow, ReplicationResult,
    SlopeFit, Transform, CSV_HEADER,
};
pub use config::{Command, Estimator, ExperimentConfig, KRR_MAX_N};
pub use runner::{
    bound_curves, glambda_table, run_concentration, run_experiment, run_krr, run_replications, with_jobs,
    write_bounds_csv, write_concentration_csv, write_glambda_csv, write_krr_csv, KrrRow, Setup,
};
pub use selftest::{selftest, Check};
