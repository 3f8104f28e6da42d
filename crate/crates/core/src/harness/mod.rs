//! Config-driven experiments: parse a run config, execute it, write
//! particle snapshots and metric curves, and line up several methods.
//!
//! Output layout of one run directory:
//!
//! ```text
//! particles_iter_00000.csv   iter,particle,coord_0..coord_{d-1}
//! particles_iter_00030.csv
//! metrics.json               config echo, status, one metric row per checkpoint
//! timing.csv                 seconds per iteration
//! ```
//!
//! Everything except `timing.csv` is a function of the config alone.

mod compare;
mod config;
mod record;

pub use compare::{
    check_axes, column_names, compare, compare_records, ComparisonTable, COMPARISON_FILE,
};
pub use config::{
    default_rate, load_config, load_config_with, parse_config, BandwidthSpec, ConfigOverrides,
    EvaluationConfig, InitConfig, PrecondConfig, RunConfig, StepperConfig, TargetSpec,
    DEFAULT_CHECKPOINTS, DEFAULT_MINIBATCH, DEFAULT_REFERENCE_SEED, DEFAULT_REFERENCE_SIZE,
};
pub use record::{
    execute, load_particles, particle_file_name, particles_csv, run_experiment, write_outputs,
    write_particles, MetricRow, RunRecord, METRICS_FILE, TIMING_FILE,
};
