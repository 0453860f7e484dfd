//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use mlqls_core::graph::WeightedGraph;
use mlqls_core::objective::ProblemSpec;
use rand::Rng;

/// G(n, p) with integer weights in `1..=max_w`.
pub fn er_graph<R: Rng>(rng: &mut R, n: usize, p: f64, max_w: u32) -> WeightedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, f64::from(rng.gen_range(1..=max_w))));
            }
        }
    }
    WeightedGraph::from_edges(n, edges).unwrap()
}

/// Square lattice with a fraction of its edges removed, a stand-in for a
/// road network.
pub fn road_grid<R: Rng>(rng: &mut R, side: usize, keep: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for y in 0..side {
        for x in 0..side {
            let u = y * side + x;
            if x + 1 < side && rng.gen::<f64>() < keep {
                edges.push((u, u + 1, 1.0));
            }
            if y + 1 < side && rng.gen::<f64>() < keep {
                edges.push((u, u + side, 1.0));
            }
        }
    }
    WeightedGraph::from_edges(side * side, edges).unwrap()
}

pub fn random_spins<R: Rng>(rng: &mut R, n: usize) -> Vec<i8> {
    (0..n).map(|_| if rng.gen() { 1 } else { -1 }).collect()
}

/// Dense `alpha v v^T - beta A`, row-major.
pub fn dense_matrix(g: &WeightedGraph, spec: &ProblemSpec) -> Vec<f64> {
    let n = g.n();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = spec.alpha() * g.volume(i) * g.volume(j);
        }
    }
    for (u, v, w) in g.edges() {
        m[u * n + v] -= spec.beta() * w;
        m[v * n + u] -= spec.beta() * w;
    }
    m
}

/// `s^T M s` by explicit double loop.
pub fn dense_energy(m: &[f64], s: &[i8]) -> f64 {
    let n = s.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            e += m[i * n + j] * f64::from(s[i]) * f64::from(s[j]);
        }
    }
    e
}

/// Objective recomputed from the spins alone, `O(n + |E|)`.
pub fn scratch_objective(g: &WeightedGraph, spec: &ProblemSpec, s: &[i8]) -> f64 {
    let d: f64 = (0..g.n()).map(|i| g.volume(i) * f64::from(s[i])).sum();
    let cut: f64 = g.edges().filter(|&(u, v, _)| s[u] != s[v]).map(|(_, _, w)| w).sum();
    spec.alpha() * d * d - 2.0 * spec.beta() * (spec.m() - 2.0 * cut)
}

/// `(1/2m) sum_ij (A_ij - k_i k_j / 2m) [c_i = c_j]`.
pub fn textbook_modularity(g: &WeightedGraph, s: &[i8]) -> f64 {
    let two_m = 2.0 * g.total_edge_weight();
    let k = g.weighted_degrees();
    let n = g.n();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if s[i] == s[j] {
                q -= k[i] * k[j] / two_m;
            }
        }
    }
    for (u, v, w) in g.edges() {
        if s[u] == s[v] {
            q += 2.0 * w;
        }
    }
    q / two_m
}

/// Naive minimum over all sign vectors: `(energy, spins)`, first in
/// natural binary order on ties.
pub fn brute_force_min(k: usize, energy: impl Fn(&[i8]) -> f64) -> (f64, Vec<i8>) {
    let mut best = (f64::INFINITY, Vec::new());
    for bits in 0u64..1 << k {
        let s: Vec<i8> = (0..k).map(|b| if bits >> b & 1 == 1 { 1 } else { -1 }).collect();
        let e = energy(&s);
        if e < best.0 {
            best = (e, s);
        }
    }
    best
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Random geometric graph in the unit square with expected degree `avg_deg`,
/// a stand-in for a finite-element mesh.
pub fn geometric_graph<R: Rng>(rng: &mut R, n: usize, avg_deg: f64) -> WeightedGraph {
    let r2 = avg_deg / (std::f64::consts::PI * n as f64);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let (dx, dy) = (pts[u].0 - pts[v].0, pts[u].1 - pts[v].1);
            if dx * dx + dy * dy < r2 {
                edges.push((u, v, 1.0));
            }
        }
    }
    WeightedGraph::from_edges(n, edges).unwrap()
}
