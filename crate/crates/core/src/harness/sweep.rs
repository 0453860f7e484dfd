use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::refine::RefineOptions;
use super::vcycle::{run_vcycle, RunRecord, VcycleOptions};
use super::HarnessError;
use crate::graph::{bfs_truncate, load_graph, planted_partition, GraphFormat, WeightedGraph};
use crate::objective::ProblemKind;
use crate::solvers::{SolverConfig, SubproblemSolver};
use crate::subqubo::{PrecisionConfig, Selection};

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 15] = [
    "instance",
    "problem",
    "k_sub",
    "solver",
    "seed",
    "hierarchy_depth",
    "level_iterations",
    "total_calls",
    "final_objective",
    "final_cut",
    "final_modularity",
    "final_imbalance",
    "feasible",
    "normalized",
    "wall_time_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: GraphFormat,
    },
    Planted {
        planted: PlantedSpec,
    },
}

fn default_format() -> GraphFormat {
    GraphFormat::Metis
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n: usize,
    #[serde(default = "two")]
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub seed: u64,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: InstanceSource,
    /// Keep only this many nodes, in BFS order.
    #[serde(default)]
    pub truncate: Option<usize>,
    /// Best-known modularity (maximized) or cut (minimized) for normalization.
    #[serde(default)]
    pub best_known: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problem: ProblemKind,
    pub k_sub: Vec<usize>,
    pub seeds: Vec<u64>,
    pub instances: Vec<InstanceSpec>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default)]
    pub precision: PrecisionConfig,
    /// Worker threads; unset uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Best-known values by instance name; an instance's own `best_known`
    /// takes precedence.
    #[serde(default)]
    pub reference: BTreeMap<String, f64>,
}

fn default_solvers() -> Vec<SolverConfig> {
    vec![SolverConfig::Exhaustive {
        max_vars: crate::solvers::DEFAULT_MAX_VARS,
    }]
}

fn default_max_iterations() -> usize {
    RefineOptions::default().max_iterations
}

/// Parses a sweep config; relative instance paths resolve against the
/// config file's directory.
pub fn load_sweep_config(path: impl AsRef<Path>) -> Result<SweepConfig, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg: SweepConfig = toml::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for inst in &mut cfg.instances {
        if let InstanceSource::File { path, .. } = &mut inst.source {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    Ok(cfg)
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub instance: String,
    pub problem: String,
    pub k_sub: usize,
    pub solver: String,
    pub seed: u64,
    pub hierarchy_depth: usize,
    /// Per-level counts, finest first, joined with `;`.
    pub level_iterations: String,
    pub total_calls: usize,
    pub final_objective: f64,
    pub final_cut: f64,
    pub final_modularity: Option<f64>,
    pub final_imbalance: f64,
    pub feasible: bool,
    pub normalized: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    /// Percentiles by linear interpolation; `std` is the sample deviation.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let x = p * (v.len() - 1) as f64;
            let (lo, hi) = (x.floor() as usize, x.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (x - lo as f64)
        };
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            median: at(0.5),
            p25: at(0.25),
            p75: at(0.75),
            mean,
            std,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub instance: String,
    pub problem: String,
    pub k_sub: usize,
    pub solver: String,
    pub runs: usize,
    pub failures: usize,
    pub normalized: Option<Stats>,
    pub final_objective: Option<Stats>,
    pub final_cut: Option<Stats>,
    pub final_modularity: Option<Stats>,
    pub total_calls: Option<Stats>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub instance: String,
    pub k_sub: usize,
    pub solver: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub schema_version: u32,
    pub records: Vec<RunRecord>,
    pub rows: Vec<CsvRow>,
    pub failures: Vec<Failure>,
    pub summary: Vec<CellSummary>,
}

fn load_instance(spec: &InstanceSpec) -> Result<WeightedGraph, HarnessError> {
    let g = match &spec.source {
        InstanceSource::File { path, format } => load_graph(path, *format)?,
        InstanceSource::Planted { planted: p } => planted_partition(p.n, p.blocks, p.p_in, p.p_out, p.seed)?,
    };
    Ok(match spec.truncate {
        Some(t) => bfs_truncate(&g, t).graph,
        None => g,
    })
}

/// Runs every (instance, k_sub, solver, seed) cell. Cells that fail are
/// reported in `failures` and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, HarnessError> {
    if cfg.k_sub.is_empty() || cfg.seeds.is_empty() || cfg.instances.is_empty() || cfg.solvers.is_empty() {
        return Err(HarnessError::Config(
            "instances, k_sub, solvers and seeds must all be non-empty".into(),
        ));
    }
    let graphs = cfg
        .instances
        .iter()
        .map(load_instance)
        .collect::<Result<Vec<_>, _>>()?;
    let solvers = cfg
        .solvers
        .iter()
        .map(SolverConfig::build)
        .collect::<Result<Vec<Box<dyn SubproblemSolver>>, _>>()?;

    let mut cells = Vec::new();
    for i in 0..graphs.len() {
        for &k in &cfg.k_sub {
            for s in 0..solvers.len() {
                for &seed in &cfg.seeds {
                    cells.push((i, k, s, seed));
                }
            }
        }
    }
    let run_cell = |&(i, k_sub, s, seed): &(usize, usize, usize, u64)| {
        let opts = VcycleOptions {
            seed,
            refine: RefineOptions {
                k_sub,
                patience: cfg.patience,
                max_iterations: cfg.max_iterations,
                selection: cfg.selection,
                precision: cfg.precision,
            },
            stop_size: None,
        };
        let name = &cfg.instances[i].name;
        run_vcycle(name, &graphs[i], cfg.problem, solvers[s].as_ref(), &opts)
            .map(|o| o.record)
            .map_err(|e| Failure {
                instance: name.clone(),
                k_sub,
                solver: cfg.solvers[s].id().to_string(),
                seed,
                error: e.to_string(),
            })
    };
    let results: Vec<Result<RunRecord, Failure>> = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => {
                log::warn!("{} k_sub={} seed={} failed: {}", f.instance, f.k_sub, f.seed, f.error);
                failures.push(f);
            }
        }
    }

    let best: BTreeMap<&str, f64> = cfg
        .instances
        .iter()
        .filter_map(|inst| {
            let known = inst.best_known.or_else(|| cfg.reference.get(&inst.name).copied());
            known
                .or_else(|| best_found(cfg.problem, records.iter().filter(|r| r.instance == inst.name)))
                .map(|b| (inst.name.as_str(), b))
        })
        .collect();
    let rows: Vec<CsvRow> = records
        .iter()
        .map(|r| CsvRow {
            instance: r.instance.clone(),
            problem: r.problem.as_str().to_string(),
            k_sub: r.k_sub,
            solver: r.solver.clone(),
            seed: r.seed,
            hierarchy_depth: r.hierarchy_depth,
            level_iterations: r
                .level_iterations
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            total_calls: r.total_calls,
            final_objective: r.final_objective,
            final_cut: r.final_cut,
            final_modularity: r.final_modularity,
            final_imbalance: r.final_imbalance,
            feasible: r.feasible,
            normalized: best.get(r.instance.as_str()).and_then(|&b| normalize(r, b)),
            wall_time_s: r.wall_time_s,
        })
        .collect();
    let summary = summarize(cfg, &rows, &failures);
    Ok(SweepOutcome {
        schema_version: 1,
        records,
        rows,
        failures,
        summary,
    })
}

fn best_found<'a>(problem: ProblemKind, records: impl Iterator<Item = &'a RunRecord>) -> Option<f64> {
    match problem {
        ProblemKind::Modularity => records.filter_map(|r| r.final_modularity).max_by(f64::total_cmp),
        ProblemKind::GraphPartitioning => records
            .filter(|r| r.feasible)
            .map(|r| r.final_cut)
            .min_by(f64::total_cmp),
    }
}

/// Modularity over best modularity, or cut over best cut.
fn normalize(r: &RunRecord, best: f64) -> Option<f64> {
    match r.problem {
        ProblemKind::Modularity => {
            let q = r.final_modularity?;
            (best > 0.0).then(|| q / best)
        }
        ProblemKind::GraphPartitioning => {
            if best > 0.0 {
                Some(r.final_cut / best)
            } else {
                (r.final_cut == 0.0).then_some(1.0)
            }
        }
    }
}

fn summarize(cfg: &SweepConfig, rows: &[CsvRow], failures: &[Failure]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for inst in &cfg.instances {
        for &k in &cfg.k_sub {
            for solver in &cfg.solvers {
                let id = solver.id();
                let cell: Vec<&CsvRow> = rows
                    .iter()
                    .filter(|r| r.instance == inst.name && r.k_sub == k && r.solver == id)
                    .collect();
                let pick = |f: fn(&CsvRow) -> Option<f64>| {
                    Stats::of(&cell.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
                };
                out.push(CellSummary {
                    instance: inst.name.clone(),
                    problem: cfg.problem.as_str().to_string(),
                    k_sub: k,
                    solver: id.to_string(),
                    runs: cell.len(),
                    failures: failures
                        .iter()
                        .filter(|f| f.instance == inst.name && f.k_sub == k && f.solver == id)
                        .count(),
                    normalized: pick(|r| r.normalized),
                    final_objective: pick(|r| Some(r.final_objective)),
                    final_cut: pick(|r| Some(r.final_cut)),
                    final_modularity: pick(|r| r.final_modularity),
                    total_calls: pick(|r| Some(r.total_calls as f64)),
                });
            }
        }
    }
    out
}

/// Writes the CSV rows with a header, in [`CSV_COLUMNS`] order.
pub fn write_csv<W: Write>(rows: &[CsvRow], w: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|source| HarnessError::Io {
        path: "csv output".into(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_percentiles() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.median, s.p25, s.p75, s.mean), (3.0, 2.0, 4.0, 3.0));
        assert!((s.std - 2.5f64.sqrt()).abs() < 1e-12);
        let s = Stats::of(&[1.0, 2.0]).unwrap();
        assert_eq!((s.median, s.p25), (1.5, 1.25));
        assert!(Stats::of(&[]).is_none());
    }

    #[test]
    fn config_parses() {
        let cfg: SweepConfig = toml::from_str(
            r#"
            problem = "mod"
            k_sub = [8, 16]
            seeds = [0, 1]
            [[instances]]
            name = "a"
            planted = { n = 40, p_in = 0.3, p_out = 0.05 }
            best_known = 0.4
            [[instances]]
            name = "b"
            path = "g.graph"
            truncate = 10
            [[solvers]]
            kind = "exhaustive"
            [[solvers]]
            kind = "sa"
            num_samples = 10
            [precision]
            mode = "separate"
            levels = 16
            penalty_ratio = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.instances.len(), 2);
        assert!(matches!(cfg.instances[1].source, InstanceSource::File { format: GraphFormat::Metis, .. }));
        assert!(matches!(&cfg.solvers[1], SolverConfig::Sa(p) if p.num_samples == 10 && p.sweeps == 50));
        assert_eq!(cfg.precision.levels, Some(16));
    }
}
