//! Config-driven runs, sweeps, metrics, and their CSV/JSON artifacts.

mod config;
mod output;
mod run;
mod spiral;
mod sweep;

pub use config::{config_error, parse_toml, random_spd, LandscapeConfig, RunConfig, QUADRATIC_START};
pub use output::{fmt_f64, grid_csv, spiral_csv, summary_json, trace_csv};
pub use run::{
    misalignment_trace, rotated_hessian_norm, run_experiment, slowdown_ratio, RunRecord, RunSummary, TraceRow,
    DIVERGENCE_LOSS,
};
pub use spiral::{probe_misalignment, spiral_slowdown_sweep, ProbeResult, Region, SpiralSweep, SpiralSweepConfig};
pub use sweep::{run_grid, Cell, CellResult, GridSpec, Strategy, SweepConfig};
