//! Simulation benchmark: risk of the smoothing-parameter selectors and the
//! aggregates over replicated datasets, plus report and plot-data writers.

mod benchmark;
mod config;
mod report;

pub use benchmark::{mean_sd, run_mise_benchmark, CellSummary, Failure, RepRisk, ReportMetadata, RiskReport};
pub use config::{DesignConfig, EvalConfig, ExperimentConfig, HGridSpec, Method};
pub use report::{
    emit_plot_data, read_excess_table, read_report, write_excess_table, write_report, ExcessRow, ReportFormat,
};
