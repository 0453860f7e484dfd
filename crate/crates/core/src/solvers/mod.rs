//! Subproblem solvers: spin vectors in, best spin vector found out.

mod annealing;
mod exhaustive;
mod external;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::subqubo::SubQubo;

pub use annealing::{solve_sa, SaParams, SimulatedAnnealing};
pub use exhaustive::{solve_exhaustive, Exhaustive, DEFAULT_MAX_VARS};
pub use external::{format_response, ExternalSolver, Limiter, SolverResponse};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("{k} variables exceed the exhaustive cap of {cap}")]
    TooLarge { k: usize, cap: usize },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error("external solver timed out after {0:?}")]
    Timeout(Duration),
    #[error("external solver exited with {status}: {stderr}")]
    NonZeroExit { status: String, stderr: String },
    #[error("malformed solver response: {0}")]
    MalformedResponse(String),
    #[error("solver returned {got} spins, expected {expected}")]
    WrongSpinLength { expected: usize, got: usize },
    #[error("solver returned spin value {0}, expected -1 or 1")]
    InvalidSpin(i64),
    #[error("could not launch external solver: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("external solver I/O: {0}")]
    Io(#[source] std::io::Error),
}

/// Best spin vector a solver found for one subproblem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub spins: Vec<i8>,
    /// Subproblem energy at `spins`, constant included.
    pub energy: f64,
    pub samples_taken: usize,
    pub proven_optimal: bool,
}

impl SolveResult {
    /// Result whose energy is recomputed from `q`.
    pub fn evaluated(q: &SubQubo, spins: Vec<i8>, samples_taken: usize, proven_optimal: bool) -> Self {
        let energy = q.energy(&spins);
        Self {
            spins,
            energy,
            samples_taken,
            proven_optimal,
        }
    }
}

pub trait SubproblemSolver: Send + Sync {
    /// Short name used in records, e.g. `"exhaustive"`.
    fn id(&self) -> &'static str;

    /// Whether results depend on the seed. Governs the default patience.
    fn is_stochastic(&self) -> bool;

    fn solve(&self, q: &SubQubo, seed: u64) -> Result<SolveResult, SolverError>;
}

/// Serializable solver choice, as used in sweep configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolverConfig {
    Exhaustive {
        #[serde(default = "default_max_vars")]
        max_vars: usize,
    },
    Sa(#[serde(default)] SaParams),
    External {
        cmd: String,
        #[serde(default = "default_timeout_s")]
        timeout_s: f64,
        #[serde(default = "default_max_concurrent")]
        max_concurrent: usize,
    },
}

fn default_max_vars() -> usize {
    DEFAULT_MAX_VARS
}

fn default_timeout_s() -> f64 {
    60.0
}

fn default_max_concurrent() -> usize {
    4
}

impl SolverConfig {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Exhaustive { .. } => "exhaustive",
            Self::Sa(_) => "sa",
            Self::External { .. } => "external",
        }
    }

    pub fn build(&self) -> Result<Box<dyn SubproblemSolver>, SolverError> {
        Ok(match self {
            Self::Exhaustive { max_vars } => Box::new(Exhaustive { max_vars: *max_vars }),
            Self::Sa(params) => {
                params.validate()?;
                Box::new(SimulatedAnnealing { params: params.clone() })
            }
            Self::External {
                cmd,
                timeout_s,
                max_concurrent,
            } => {
                if !(timeout_s.is_finite() && *timeout_s >= 0.0) {
                    return Err(SolverError::InvalidParams(format!("timeout {timeout_s}")));
                }
                Box::new(ExternalSolver::new(
                    cmd.clone(),
                    Duration::from_secs_f64(*timeout_s),
                    Limiter::new(*max_concurrent)?,
                ))
            }
        })
    }
}

/// Spin encoding of bit `b` of `bits`: 1 is `+1`, 0 is `-1`.
#[inline]
pub(crate) fn spin_of_bit(bits: u64, b: usize) -> i8 {
    if bits >> b & 1 == 1 {
        1
    } else {
        -1
    }
}
