//! Configuration, orchestration and file output around `qnd-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod figures;
pub mod output;
pub mod run;
pub mod setup;

pub use config::{parse_config, preset, resolve, ConfigError, Mode, RawConfig, RunConfig};
pub use figures::{export_figure_data, figure_table, Figure, FigureError, FigureSource};
pub use run::{adiabatic_comparison, analyze_trajectory, run, run_ensemble, AdiabaticReport, RunError, RunSummary};
