//! The three standard experiments (interferer-angle sweep, favorable
//! propagation sweep, clustered multi-cell sweep), their configuration files
//! and CSV output.

mod config;
mod results;
mod sweeps;

pub use config::{ConfigFile, ExperimentConfig, ExperimentKind, DEFAULT_K_VALUES, DEFAULT_N_VALUES};
pub use results::{format_sig9, read_csv, write_csv, ResultRow, CSV_HEADER};
pub use sweeps::{angle_sweep, cluster_sweep, run_experiment, variance_sweep, ClusterFamily};
