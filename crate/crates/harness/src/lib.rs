//! Configuration-driven experiment harness: runs attack/detection/
//! identification grids end to end, sweeps parameters, and summarizes
//! artifacts.

pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{desk_scale_config, ExperimentConfig};
pub use experiment::{
    run_cell, run_experiment, write_artifacts, CellArtifacts, CellKey, RunArtifacts,
};
pub use report::{load_cells, summarize, write_report, Summary};
pub use sweep::{sweep, write_sweep, SweepDimension};
