//! Sweep experiments over the linear-Gaussian model, with CSV and SVG output.
//!
//! Each (grid value, seed) pair is an independent work item whose random
//! streams are derived from `(master_seed, grid index, seed)`, so output does
//! not depend on scheduling or the number of worker threads.

mod config;
mod output;
mod sweep;

pub use config::{SweepConfig, SweepVariable, SCHEMA_VERSION};
pub use output::{emit_csv, emit_figure_pair, emit_svg, format_float, read_csv, records_to_csv, render_svg};
pub use sweep::{
    grid_means, run_lambda_sweep, run_noise_sweep, run_sigma12_sweep, run_sweep, run_sweep_with_threads, SweepRecord,
    THREADS_ENV,
};
