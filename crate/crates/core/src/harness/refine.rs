use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::graph::WeightedGraph;
use crate::objective::{evaluate, gains, PartitionState, ProblemSpec};
use crate::solvers::SubproblemSolver;
use crate::subqubo::{build_subqubo, scale_for_precision, select_free, PrecisionConfig, Selection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineOptions {
    pub k_sub: usize,
    /// Consecutive non-improving solves before stopping. Unset means 1 for a
    /// deterministic solver with greedy selection, 3 otherwise.
    pub patience: Option<usize>,
    /// Hard cap on solver calls per level.
    pub max_iterations: usize,
    pub selection: Selection,
    pub precision: PrecisionConfig,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            k_sub: 20,
            patience: None,
            max_iterations: 10_000,
            selection: Selection::Greedy,
            precision: PrecisionConfig::default(),
        }
    }
}

impl RefineOptions {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.k_sub == 0 {
            return Err(HarnessError::Config("k_sub must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(HarnessError::Config("patience must be at least 1".into()));
        }
        if let Some(levels) = self.precision.levels {
            if levels < 2 {
                return Err(HarnessError::Config(format!("levels = {levels}, need at least 2")));
            }
        }
        if !(self.precision.penalty_ratio.is_finite() && self.precision.penalty_ratio >= 0.0) {
            return Err(HarnessError::Config(format!(
                "penalty ratio {}",
                self.precision.penalty_ratio
            )));
        }
        Ok(())
    }

    pub fn patience_for(&self, solver: &dyn SubproblemSolver) -> usize {
        self.patience.unwrap_or(
            if solver.is_stochastic() || self.selection == Selection::Stochastic {
                3
            } else {
                1
            },
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    /// Solver calls made.
    pub iterations: usize,
    pub accepted: usize,
    pub solver_errors: usize,
    /// Objective at the start, then after each accepted solve.
    pub trace: Vec<f64>,
}

/// Whether `new` beats `old` by more than rounding noise.
pub(crate) fn improves(new: f64, old: f64) -> bool {
    new < old - 1e-12 * old.abs().max(1.0)
}

/// Repeatedly re-optimizes the `k_sub` highest-gain nodes with `solver`,
/// keeping a candidate only if it strictly lowers the true (unscaled)
/// objective.
pub fn refine_level<R: Rng + ?Sized>(
    g: &WeightedGraph,
    spec: &ProblemSpec,
    state: &mut PartitionState,
    solver: &dyn SubproblemSolver,
    opts: &RefineOptions,
    rng: &mut R,
) -> Result<RefineOutcome, HarnessError> {
    opts.validate()?;
    let patience = opts.patience_for(solver);
    let mut objective = evaluate(spec, state).objective;
    let mut out = RefineOutcome {
        trace: vec![objective],
        ..RefineOutcome::default()
    };
    let mut misses = 0;
    while misses < patience && out.iterations < opts.max_iterations {
        let gain = gains(g, spec, state);
        let free = select_free(&gain, opts.k_sub, opts.selection, rng);
        let q = build_subqubo(g, spec, state, &free)?;
        let scaled = scale_for_precision(&q, &opts.precision)?;
        out.iterations += 1;
        let result = match solver.solve(&scaled, rng.gen()) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{} solver failed: {e}", solver.id());
                out.solver_errors += 1;
                misses += 1;
                continue;
            }
        };
        let flips: Vec<usize> = free
            .iter()
            .zip(&result.spins)
            .filter(|(&u, &s)| state.spin(u) != s)
            .map(|(&u, _)| u)
            .collect();
        if flips.is_empty() || !improves(q.energy(&result.spins), objective) {
            misses += 1;
            continue;
        }
        state.apply_flips(g, &flips)?;
        let after = evaluate(spec, state).objective;
        if improves(after, objective) {
            objective = after;
            out.trace.push(after);
            out.accepted += 1;
            misses = 0;
        } else {
            state.apply_flips(g, &flips)?;
            misses += 1;
        }
    }
    Ok(out)
}
