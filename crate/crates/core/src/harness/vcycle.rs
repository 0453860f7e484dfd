use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::refine::{improves, refine_level, RefineOptions};
use super::HarnessError;
use crate::coarsen::{build_hierarchy, project};
use crate::graph::WeightedGraph;
use crate::objective::{evaluate, gains, PartitionState, ProblemKind, ProblemSpec};
use crate::solvers::SubproblemSolver;
use crate::subqubo::{build_subqubo, scale_for_precision};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VcycleOptions {
    pub seed: u64,
    pub refine: RefineOptions,
    /// Coarsening target; defaults to `k_sub`.
    pub stop_size: Option<usize>,
}

/// Outcome of one V-cycle, evaluated on the finest graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub problem: ProblemKind,
    pub k_sub: usize,
    pub solver: String,
    pub seed: u64,
    pub hierarchy_depth: usize,
    /// Solver calls made by refinement on each level, finest first.
    pub level_iterations: Vec<usize>,
    /// Whether the coarsest level was solved in one call over all its nodes.
    pub coarsest_direct: bool,
    pub total_calls: usize,
    pub final_objective: f64,
    pub final_cut: f64,
    pub final_modularity: Option<f64>,
    pub final_imbalance: f64,
    /// For bisection, imbalance no larger than the largest node volume.
    pub feasible: bool,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub n: usize,
    pub iterations: usize,
    pub accepted: usize,
    pub solver_errors: usize,
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VcycleOutcome {
    pub record: RunRecord,
    /// Final spins on the finest graph.
    pub spins: Vec<i8>,
    /// Objective on the finest graph before its refinement began.
    pub initial_objective: f64,
    /// Per-level refinement traces, coarsest first.
    pub traces: Vec<LevelTrace>,
}

/// Uniform random spins, then flips of low-|gain| nodes on the heavier side
/// until the imbalance is at most the largest node volume.
pub fn random_balanced_spins<R: Rng + ?Sized>(
    g: &WeightedGraph,
    spec: &ProblemSpec,
    rng: &mut R,
) -> PartitionState {
    let spins = (0..g.n()).map(|_| if rng.gen() { 1 } else { -1 }).collect();
    let mut state = PartitionState::new(g, spins).expect("spins are valid");
    let gain = gains(g, spec, &state);
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| gain[a].abs().total_cmp(&gain[b].abs()).then(a.cmp(&b)));
    let limit = g.max_volume();
    loop {
        let mut flipped = false;
        for &u in &order {
            let diff = state.vol_c2() - state.vol_c1();
            if diff.abs() <= limit {
                return state;
            }
            let heavier = if diff > 0.0 { 1 } else { -1 };
            let v = g.volume(u);
            // flipping shrinks |diff| to |diff - 2v|, an improvement iff 0 < v < |diff|
            if state.spin(u) == heavier && v > 0.0 && v < diff.abs() {
                state.flip(g, u);
                flipped = true;
            }
        }
        if !flipped {
            return state;
        }
    }
}

/// One V-cycle: coarsen to at most `stop_size` nodes, solve or refine the
/// coarsest level, then project and refine level by level.
pub fn run_vcycle(
    instance: &str,
    g: &WeightedGraph,
    kind: ProblemKind,
    solver: &dyn SubproblemSolver,
    opts: &VcycleOptions,
) -> Result<VcycleOutcome, HarnessError> {
    let start = Instant::now();
    let ropts = &opts.refine;
    ropts.validate()?;
    let spec = ProblemSpec::for_graph(kind, g)?;
    let stop_size = opts.stop_size.unwrap_or(ropts.k_sub).max(2);
    let hierarchy = build_hierarchy(g, &spec, stop_size, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);

    let depth = hierarchy.depth();
    let mut level_iterations = vec![0; depth];
    let mut traces = Vec::with_capacity(depth);
    let coarsest = hierarchy.coarsest();
    let mut coarsest_direct = false;
    let mut state = None;
    let mut solved_directly = false;
    if coarsest.n() <= ropts.k_sub {
        let all: Vec<usize> = (0..coarsest.n()).collect();
        let start_state = PartitionState::uniform(coarsest, -1);
        let q = build_subqubo(coarsest, &spec, &start_state, &all)?;
        let scaled = scale_for_precision(&q, &ropts.precision)?;
        coarsest_direct = true;
        match solver.solve(&scaled, rng.gen()) {
            Ok(r) => {
                state = Some(PartitionState::new(coarsest, r.spins)?);
                solved_directly = true;
            }
            Err(e) => log::warn!("direct coarsest solve failed, falling back to random start: {e}"),
        }
    }

    let mut initial_objective = f64::NAN;
    for level in (0..depth).rev() {
        let lg = hierarchy.level(level);
        let mut st = match state.take() {
            Some(s) if level + 1 == depth => s,
            Some(s) => PartitionState::new(lg, project(s.spins(), hierarchy.coarse_of(level + 1))?)?,
            None => random_balanced_spins(lg, &spec, &mut rng),
        };
        if level == 0 {
            initial_objective = evaluate(&spec, &st).objective;
        }
        // a successful direct solve already covered every coarsest node
        let skip = level + 1 == depth && solved_directly;
        if skip {
            traces.push(LevelTrace {
                level,
                n: lg.n(),
                iterations: 0,
                accepted: 0,
                solver_errors: 0,
                trace: vec![evaluate(&spec, &st).objective],
            });
        } else {
            let out = refine_level(lg, &spec, &mut st, solver, ropts, &mut rng)?;
            level_iterations[level] = out.iterations;
            traces.push(LevelTrace {
                level,
                n: lg.n(),
                iterations: out.iterations,
                accepted: out.accepted,
                solver_errors: out.solver_errors,
                trace: out.trace,
            });
        }
        state = Some(st);
    }
    let state = state.expect("at least one level");
    let finest = hierarchy.finest();
    let eval = evaluate(&spec, &state);
    debug_assert!(!improves(initial_objective, eval.objective));
    let feasible = match kind {
        ProblemKind::GraphPartitioning => eval.imbalance <= finest.max_volume(),
        ProblemKind::Modularity => true,
    };
    let total_calls = level_iterations.iter().sum::<usize>() + usize::from(coarsest_direct);
    let record = RunRecord {
        instance: instance.to_string(),
        problem: kind,
        k_sub: ropts.k_sub,
        solver: solver.id().to_string(),
        seed: opts.seed,
        hierarchy_depth: depth,
        level_iterations,
        coarsest_direct,
        total_calls,
        final_objective: eval.objective,
        final_cut: eval.cut,
        final_modularity: eval.modularity,
        final_imbalance: eval.imbalance,
        feasible,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(VcycleOutcome {
        record,
        spins: state.into_spins(),
        initial_objective,
        traces,
    })
}
