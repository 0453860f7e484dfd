//! Multilevel local search for balanced graph bisection and two-community
//! modularity, with pluggable solvers for small Ising subproblems.

pub mod coarsen;
pub mod graph;
pub mod harness;
pub mod objective;
pub mod solvers;
pub mod subqubo;
