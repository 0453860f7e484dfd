use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mlqls_core::graph::{load_graph, planted_partition, save_graph, GraphFormat};
use mlqls_core::harness::{load_sweep_config, run_sweep, run_vcycle, write_csv, RefineOptions, VcycleOptions};
use mlqls_core::objective::ProblemKind;
use mlqls_core::solvers::{
    format_response, solve_exhaustive, solve_sa, ExternalSolver, Exhaustive, Limiter, SaParams, SimulatedAnnealing,
    SolveResult, SubproblemSolver, DEFAULT_MAX_VARS,
};
use mlqls_core::subqubo::{PrecisionConfig, PrecisionMode, Selection, SubQubo, WireQubo};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Graph(#[from] mlqls_core::graph::GraphError),
    #[error(transparent)]
    Harness(#[from] mlqls_core::harness::HarnessError),
    #[error(transparent)]
    Solver(#[from] mlqls_core::solvers::SolverError),
    #[error(transparent)]
    SubQubo(#[from] mlqls_core::subqubo::SubQuboError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad JSON input: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Parser)]
#[command(name = "mlqls", version, about = "Multilevel local search for bisection and modularity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Exhaustive,
    Sa,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServeKind {
    Exhaustive,
    Sa,
    /// Answer all +1 without looking at the problem.
    Echo,
}

#[derive(Subcommand)]
enum Command {
    /// Run one V-cycle on a graph file.
    Solve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "metis")]
        format: GraphFormat,
        #[arg(long, default_value = "mod")]
        problem: ProblemKind,
        #[arg(long, default_value_t = 20)]
        k_sub: usize,
        #[arg(long, value_enum, default_value = "exhaustive")]
        solver: SolverKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "none")]
        precision: PrecisionMode,
        /// Quantization levels for the scaled coefficients.
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long, default_value_t = 1.0)]
        penalty_ratio: f64,
        /// Shell command speaking the JSON subproblem protocol on stdin/stdout.
        #[arg(long)]
        external_cmd: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        external_timeout: f64,
        #[arg(long, default_value_t = 1)]
        external_concurrency: usize,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
        /// Sample free nodes among the top 2k gains instead of taking the top k.
        #[arg(long)]
        stochastic_selection: bool,
        #[arg(long, default_value_t = 1000)]
        sa_samples: usize,
        #[arg(long, default_value_t = 50)]
        sa_sweeps: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_VARS)]
        max_vars: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of a sweep config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Summary JSON path; defaults to the CSV path with a `.summary.json` suffix.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write a planted-partition graph.
    Gen {
        /// `n,blocks,p_in,p_out`
        #[arg(long)]
        planted: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "metis")]
        format: GraphFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one subproblem JSON from stdin and print the response JSON.
    QuboSolve {
        #[arg(long, value_enum, default_value = "exhaustive")]
        solver: ServeKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_planted(spec: &str) -> Result<(usize, usize, f64, f64), CliError> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--planted expects n,blocks,p_in,p_out, got {spec:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
        parts[3].parse().map_err(|_| bad())?,
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_err(path))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve {
            graph,
            format,
            problem,
            k_sub,
            solver,
            seed,
            precision,
            levels,
            penalty_ratio,
            external_cmd,
            external_timeout,
            external_concurrency,
            patience,
            max_iterations,
            stochastic_selection,
            sa_samples,
            sa_sweeps,
            max_vars,
            out,
        } => {
            let g = load_graph(&graph, format)?;
            let solver: Box<dyn SubproblemSolver> = match solver {
                SolverKind::Exhaustive => Box::new(Exhaustive { max_vars }),
                SolverKind::Sa => {
                    let params = SaParams {
                        num_samples: sa_samples,
                        sweeps: sa_sweeps,
                        ..SaParams::default()
                    };
                    params.validate()?;
                    Box::new(SimulatedAnnealing { params })
                }
                SolverKind::External => {
                    let cmd = external_cmd
                        .ok_or_else(|| CliError::Usage("--solver external needs --external-cmd".into()))?;
                    if !(external_timeout.is_finite() && external_timeout >= 0.0) {
                        return Err(CliError::Usage(format!("bad --external-timeout {external_timeout}")));
                    }
                    Box::new(ExternalSolver::new(
                        cmd,
                        Duration::from_secs_f64(external_timeout),
                        Limiter::new(external_concurrency)?,
                    ))
                }
            };
            let opts = VcycleOptions {
                seed,
                refine: RefineOptions {
                    k_sub,
                    patience,
                    max_iterations,
                    selection: if stochastic_selection {
                        Selection::Stochastic
                    } else {
                        Selection::Greedy
                    },
                    precision: PrecisionConfig {
                        mode: precision,
                        levels,
                        penalty_ratio,
                    },
                },
                stop_size: None,
            };
            let name = graph
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let outcome = run_vcycle(&name, &g, problem, solver.as_ref(), &opts)?;
            let r = &outcome.record;
            log::info!(
                "{name}: objective {} cut {} calls {} depth {}",
                r.final_objective,
                r.final_cut,
                r.total_calls,
                r.hierarchy_depth
            );
            write_json(
                &out,
                &json!({
                    "schema_version": 1,
                    "record": outcome.record,
                    "initial_objective": outcome.initial_objective,
                    "levels": outcome.traces,
                    "spins": outcome.spins,
                }),
            )
        }
        Command::Sweep { config, out, summary } => {
            let cfg = load_sweep_config(&config)?;
            let result = run_sweep(&cfg)?;
            let f = File::create(&out).map_err(io_err(&out))?;
            write_csv(&result.rows, BufWriter::new(f))?;
            let summary = summary.unwrap_or_else(|| out.with_extension("summary.json"));
            write_json(
                &summary,
                &json!({
                    "schema_version": result.schema_version,
                    "cells": result.summary,
                    "failures": result.failures,
                }),
            )?;
            log::info!(
                "{} rows, {} failed cells",
                result.rows.len(),
                result.failures.len()
            );
            Ok(())
        }
        Command::Gen {
            planted,
            seed,
            format,
            out,
        } => {
            let (n, blocks, p_in, p_out) = parse_planted(&planted)?;
            let g = planted_partition(n, blocks, p_in, p_out, seed)?;
            save_graph(&g, &out, format)?;
            Ok(())
        }
        Command::QuboSolve { solver, seed } => {
            let mut input = String::new();
            std::io::stdin()
                .read_to_string(&mut input)
                .map_err(io_err(Path::new("<stdin>")))?;
            let wire: WireQubo = serde_json::from_str(&input)?;
            let q = SubQubo::from_wire(&wire)?;
            let result = match solver {
                ServeKind::Exhaustive => solve_exhaustive(&q, DEFAULT_MAX_VARS)?,
                ServeKind::Sa => solve_sa(&q, &SaParams::default(), seed)?,
                ServeKind::Echo => SolveResult::evaluated(&q, vec![1; q.k()], 1, false),
            };
            println!("{}", format_response(&result));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
