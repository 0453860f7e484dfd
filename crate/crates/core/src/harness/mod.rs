//! Refinement loop, V-cycle driver and experiment sweeps.

mod refine;
mod sweep;
mod vcycle;

pub use refine::{refine_level, RefineOptions, RefineOutcome};
pub use sweep::{
    load_sweep_config, run_sweep, write_csv, CellSummary, CsvRow, InstanceSource, InstanceSpec, Stats,
    SweepConfig, SweepOutcome, CSV_COLUMNS,
};
pub use vcycle::{random_balanced_spins, run_vcycle, LevelTrace, RunRecord, VcycleOptions, VcycleOutcome};

use crate::coarsen::CoarsenError;
use crate::graph::GraphError;
use crate::objective::ObjectiveError;
use crate::solvers::SolverError;
use crate::subqubo::SubQuboError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Coarsen(#[from] CoarsenError),
    #[error(transparent)]
    SubQubo(#[from] SubQuboError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad sweep config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
