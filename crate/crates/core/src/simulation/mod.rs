//! Monte Carlo evaluation of the estimators on the study's nine DGPs.

pub mod dgp;
pub mod metrics;
pub mod runner;

pub use dgp::{generate_dataset, Dgp, MeanFunction, RunningVariable, NOISE_SD, TRUE_TAU};
pub use metrics::{aggregate, point_summary, proportion_mcse, Mcse, RepRecord, SimCellResult};
pub use runner::{replication_rng, run_cell, run_cell_with_threads, CellOutput, CellSpec};

/// Study sizes used throughout the simulation design.
pub const M_BAR_TARGETS: [f64; 5] = [10.0, 21.0, 27.0, 44.0, 57.0];
