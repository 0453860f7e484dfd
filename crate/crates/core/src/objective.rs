//! Balanced bisection and two-community modularity as one penalized Ising
//! objective, evaluated from partition aggregates without forming the dense
//! n x n matrix.
//!
//! Both problems minimize `s^T (alpha v v^T - beta A) s` over spins
//! `s in {-1, +1}^n`. For modularity the volume vector `v` holds the weighted
//! degrees of the finest graph, `alpha = 1 / 2m` and `beta = 1`. Spins of `-1`
//! place a node in part C1, `+1` in C2.
//!
//! `m` is the total edge weight of the finest graph and is carried unchanged
//! to every coarse level. Coarsening turns contracted edges into self-loops,
//! which are dropped: with `s_i^2 = 1` they only shift the objective by a
//! constant, and evaluating with the finest `m` absorbs that constant.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::graph::WeightedGraph;

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("expected {expected} spins, got {got}")]
    SpinCount { expected: usize, got: usize },
    #[error("spin {value} at node {node} is not -1 or +1")]
    InvalidSpin { node: usize, value: i8 },
    #[error("node {0} listed twice in flip set")]
    DuplicateFlip(usize),
    #[error("node {node} out of range (n = {n})")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("invalid problem constants: {0}")]
    InvalidSpec(String),
    #[error("partition aggregates are stale: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "gp", alias = "graph_partitioning")]
    GraphPartitioning,
    #[serde(rename = "mod", alias = "modularity")]
    Modularity,
}

impl ProblemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::GraphPartitioning => "gp",
            ProblemKind::Modularity => "mod",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gp" | "graph_partitioning" => Ok(Self::GraphPartitioning),
            "mod" | "modularity" => Ok(Self::Modularity),
            other => Err(format!("unknown problem {other:?} (expected gp or mod)")),
        }
    }
}

/// Objective constants shared by every level of one V-cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    kind: ProblemKind,
    alpha: f64,
    beta: f64,
    m: f64,
}

impl ProblemSpec {
    pub fn graph_partitioning(alpha: f64, beta: f64, m: f64) -> Result<Self, ObjectiveError> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!(
                "alpha = {alpha} and beta = {beta} must be positive"
            )));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!("m = {m}")));
        }
        Ok(Self {
            kind: ProblemKind::GraphPartitioning,
            alpha,
            beta,
            m,
        })
    }

    /// `alpha = 1/(2m)`, `beta = 1`.
    pub fn modularity(m: f64) -> Result<Self, ObjectiveError> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(ObjectiveError::InvalidSpec(format!(
                "modularity needs positive total edge weight, got {m}"
            )));
        }
        Ok(Self {
            kind: ProblemKind::Modularity,
            alpha: 1.0 / (2.0 * m),
            beta: 1.0,
            m,
        })
    }

    /// Default constants for the finest graph `g`.
    ///
    /// For bisection, `beta = 1` and `alpha = (1 + max_i k_i) / min_i v_i^2`:
    /// moving one node off a balanced split costs `4 alpha v_i^2`, which then
    /// exceeds the largest possible cut reduction `4 k_i`.
    pub fn for_graph(kind: ProblemKind, g: &WeightedGraph) -> Result<Self, ObjectiveError> {
        let m = g.total_edge_weight();
        match kind {
            ProblemKind::Modularity => Self::modularity(m),
            ProblemKind::GraphPartitioning => {
                let vmin = g
                    .volumes()
                    .iter()
                    .copied()
                    .filter(|&v| v > 0.0)
                    .fold(f64::INFINITY, f64::min);
                let vmin = if vmin.is_finite() { vmin } else { 1.0 };
                let alpha = (1.0 + g.max_weighted_degree()) / (vmin * vmin);
                Self::graph_partitioning(alpha, 1.0, m)
            }
        }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Total edge weight of the finest graph.
    pub fn m(&self) -> f64 {
        self.m
    }
}

/// Sets each node's volume to its weighted degree (modularity weighting).
///
/// Applied once, on the finest graph; coarsening then preserves
/// `sum(volume) = 2m` at every level.
pub fn update_weights_for_modularity(g: &WeightedGraph) -> WeightedGraph {
    let degrees = g.weighted_degrees().to_vec();
    g.clone()
        .with_volumes(degrees)
        .expect("weighted degrees are finite and nonnegative")
}

#[inline]
fn side_of(spin: i8) -> usize {
    (spin > 0) as usize
}

/// A bisection with incrementally maintained aggregates.
///
/// Index 0 of each aggregate pair refers to C1 (spin -1), index 1 to C2.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionState {
    spins: Vec<i8>,
    vol: [f64; 2],
    deg: [f64; 2],
    cut: f64,
}

impl PartitionState {
    /// Builds a state from explicit spins, computing aggregates from scratch.
    pub fn new(g: &WeightedGraph, spins: Vec<i8>) -> Result<Self, ObjectiveError> {
        if spins.len() != g.n() {
            return Err(ObjectiveError::SpinCount {
                expected: g.n(),
                got: spins.len(),
            });
        }
        if let Some((node, &value)) = spins.iter().enumerate().find(|(_, s)| s.abs() != 1) {
            return Err(ObjectiveError::InvalidSpin { node, value });
        }
        let mut vol = [0.0; 2];
        let mut deg = [0.0; 2];
        for (u, &s) in spins.iter().enumerate() {
            vol[side_of(s)] += g.volume(u);
            deg[side_of(s)] += g.weighted_degree(u);
        }
        let cut = g
            .edges()
            .filter(|&(u, v, _)| spins[u] != spins[v])
            .map(|(_, _, w)| w)
            .sum();
        Ok(Self {
            spins,
            vol,
            deg,
            cut,
        })
    }

    /// All nodes on one side.
    pub fn uniform(g: &WeightedGraph, spin: i8) -> Self {
        let s = if spin > 0 { 1 } else { -1 };
        Self::new(g, vec![s; g.n()]).expect("uniform spins are valid")
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn into_spins(self) -> Vec<i8> {
        self.spins
    }

    pub fn spin(&self, u: usize) -> i8 {
        self.spins[u]
    }

    pub fn vol_c1(&self) -> f64 {
        self.vol[0]
    }

    pub fn vol_c2(&self) -> f64 {
        self.vol[1]
    }

    pub fn deg_c1(&self) -> f64 {
        self.deg[0]
    }

    pub fn deg_c2(&self) -> f64 {
        self.deg[1]
    }

    /// Volume on the side given by `spin`.
    pub fn vol_of(&self, spin: i8) -> f64 {
        self.vol[side_of(spin)]
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    /// Flips one node in `O(deg(u))`.
    pub fn flip(&mut self, g: &WeightedGraph, u: usize) {
        let s = self.spins[u];
        let from = side_of(s);
        let to = 1 - from;
        let v = g.volume(u);
        let k = g.weighted_degree(u);
        self.vol[from] -= v;
        self.vol[to] += v;
        self.deg[from] -= k;
        self.deg[to] += k;
        for (j, w) in g.adjacency(u) {
            if self.spins[j] == s {
                self.cut += w;
            } else {
                self.cut -= w;
            }
        }
        self.spins[u] = -s;
    }

    /// Flips every listed node. Nodes must be distinct and in range.
    pub fn apply_flips(&mut self, g: &WeightedGraph, nodes: &[usize]) -> Result<(), ObjectiveError> {
        let mut seen = HashSet::with_capacity(nodes.len());
        for &u in nodes {
            if u >= g.n() {
                return Err(ObjectiveError::NodeOutOfRange { node: u, n: g.n() });
            }
            if !seen.insert(u) {
                return Err(ObjectiveError::DuplicateFlip(u));
            }
        }
        for &u in nodes {
            self.flip(g, u);
        }
        Ok(())
    }

    /// Compares aggregates with a fresh recomputation (relative tolerance `tol`).
    pub fn check_consistency(&self, g: &WeightedGraph, tol: f64) -> Result<(), ObjectiveError> {
        let fresh = Self::new(g, self.spins.clone())?;
        let close = |a: f64, b: f64| (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0);
        let pairs = [
            ("vol_c1", self.vol[0], fresh.vol[0]),
            ("vol_c2", self.vol[1], fresh.vol[1]),
            ("deg_c1", self.deg[0], fresh.deg[0]),
            ("deg_c2", self.deg[1], fresh.deg[1]),
            ("cut", self.cut, fresh.cut),
        ];
        for (name, have, want) in pairs {
            if !close(have, want) {
                return Err(ObjectiveError::Inconsistent(format!(
                    "{name} = {have}, recomputed {want}"
                )));
            }
        }
        Ok(())
    }
}

/// Objective value and reporting metrics of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Minimization value `alpha (V1 - V2)^2 - 2 beta (m - 2 cut)`.
    pub objective: f64,
    pub cut: f64,
    /// `|Vol(C1) - Vol(C2)|`.
    pub imbalance: f64,
    /// Two-community modularity, for modularity problems only.
    pub modularity: Option<f64>,
}

/// `O(1)` evaluation from the stored aggregates.
pub fn evaluate(spec: &ProblemSpec, state: &PartitionState) -> Evaluation {
    let diff = state.vol[0] - state.vol[1];
    let m = spec.m;
    let objective = spec.alpha * diff * diff - 2.0 * spec.beta * (m - 2.0 * state.cut);
    let modularity = match spec.kind {
        ProblemKind::Modularity => {
            Some((2.0 * (m - 2.0 * state.cut) - diff * diff / (2.0 * m)) / (4.0 * m))
        }
        ProblemKind::GraphPartitioning => None,
    };
    Evaluation {
        objective,
        cut: state.cut,
        imbalance: diff.abs(),
        modularity,
    }
}

/// Gain of flipping node `u`; the objective changes by exactly `-2 * gain`.
///
/// For `u` in part `C` with opposite part `C'`:
/// `2 alpha v_u (Vol(C \ u) - Vol(C')) - 2 beta (deg(u, C) - deg(u, C'))`.
/// With modularity constants this is
/// `(k_u / m)(Deg(C \ u) - Deg(C')) - 2 (deg(u, C) - deg(u, C'))`.
#[inline]
pub fn gain(g: &WeightedGraph, spec: &ProblemSpec, state: &PartitionState, u: usize) -> f64 {
    let s = state.spins[u];
    let own = side_of(s);
    let v = g.volume(u);
    let mut same = 0.0;
    let mut other = 0.0;
    for (j, w) in g.adjacency(u) {
        if state.spins[j] == s {
            same += w;
        } else {
            other += w;
        }
    }
    2.0 * spec.alpha * v * (state.vol[own] - v - state.vol[1 - own]) - 2.0 * spec.beta * (same - other)
}

/// Gains of all nodes, `O(sum of degrees)`.
pub fn gains(g: &WeightedGraph, spec: &ProblemSpec, state: &PartitionState) -> Vec<f64> {
    (0..g.n()).map(|u| gain(g, spec, state, u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_metis, planted_partition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p4() -> WeightedGraph {
        parse_metis("4 3\n2\n1 3\n2 4\n3\n").unwrap()
    }

    fn k4() -> WeightedGraph {
        let edges = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v, 1.0)));
        WeightedGraph::from_edges(4, edges).unwrap()
    }

    fn modularity_setup(g: &WeightedGraph) -> (WeightedGraph, ProblemSpec) {
        let g = update_weights_for_modularity(g);
        let spec = ProblemSpec::modularity(g.total_edge_weight()).unwrap();
        (g, spec)
    }

    #[test]
    fn modularity_weights() {
        let g = update_weights_for_modularity(&p4());
        assert_eq!(g.volumes(), &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(g.total_volume(), 6.0);
        let k = update_weights_for_modularity(&k4());
        assert_eq!(k.volumes(), &[3.0; 4]);
        assert_eq!(k.total_volume(), 12.0);
        let w = crate::graph::parse_edgelist("0 1 2.5\n1 2 1.0").unwrap();
        assert_eq!(update_weights_for_modularity(&w).volumes(), &[2.5, 3.5, 1.0]);
    }

    #[test]
    fn modularity_of_reference_partitions() {
        let (g, spec) = modularity_setup(&p4());
        let all = PartitionState::uniform(&g, 1);
        let e = evaluate(&spec, &all);
        assert_eq!(e.cut, 0.0);
        assert_eq!(e.modularity, Some(0.0));

        let split = PartitionState::new(&g, vec![-1, -1, 1, 1]).unwrap();
        let e = evaluate(&spec, &split);
        assert_eq!(e.cut, 1.0);
        assert_eq!((split.deg_c1(), split.deg_c2()), (3.0, 3.0));
        assert!((e.modularity.unwrap() - 1.0 / 6.0).abs() < 1e-15);

        let (g, spec) = modularity_setup(&k4());
        for spins in [[-1, -1, 1, 1], [-1, 1, -1, 1], [1, -1, -1, 1]] {
            let st = PartitionState::new(&g, spins.to_vec()).unwrap();
            let e = evaluate(&spec, &st);
            assert_eq!(e.cut, 4.0);
            assert!((e.modularity.unwrap() + 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn p4_gain_matches_flip_difference() {
        let (g, spec) = modularity_setup(&p4());
        let mut st = PartitionState::new(&g, vec![-1, -1, 1, 1]).unwrap();
        let gn = gain(&g, &spec, &st, 1);
        assert!((gn + 4.0 / 3.0).abs() < 1e-12);
        let before = evaluate(&spec, &st).objective;
        st.flip(&g, 1);
        let after = evaluate(&spec, &st).objective;
        assert!((after - before - 8.0 / 3.0).abs() < 1e-12);
        assert!((after - before + 2.0 * gn).abs() < 1e-12);
    }

    #[test]
    fn gp_gains_on_two_disjoint_edges() {
        let g = WeightedGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let alpha = 0.75;
        let spec = ProblemSpec::graph_partitioning(alpha, 1.0, g.total_edge_weight()).unwrap();
        let st = PartitionState::new(&g, vec![-1, -1, 1, 1]).unwrap();
        for u in 0..4 {
            let gn = gain(&g, &spec, &st, u);
            assert!((gn - (-2.0 * alpha - 2.0)).abs() < 1e-12);
            let mut moved = st.clone();
            moved.flip(&g, u);
            let delta = evaluate(&spec, &moved).objective - evaluate(&spec, &st).objective;
            assert!((delta + 2.0 * gn).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_partition_has_equal_gains_on_orbits() {
        // cycle C6 split into two arcs of three: mirror symmetry pairs (0,5),(1,4),(2,3)
        let g = WeightedGraph::from_edges(6, (0..6).map(|u| (u, (u + 1) % 6, 1.0))).unwrap();
        let (g, spec) = modularity_setup(&g);
        let st = PartitionState::new(&g, vec![-1, -1, -1, 1, 1, 1]).unwrap();
        let gs = gains(&g, &spec, &st);
        assert!((gs[0] - gs[5]).abs() < 1e-12);
        assert!((gs[1] - gs[4]).abs() < 1e-12);
        assert!((gs[2] - gs[3]).abs() < 1e-12);
    }

    #[test]
    fn flip_involution_and_global_flip() {
        let g = planted_partition(50, 2, 0.3, 0.05, 1).unwrap();
        let spec = ProblemSpec::for_graph(ProblemKind::GraphPartitioning, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spins: Vec<i8> = (0..50).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        let st = PartitionState::new(&g, spins).unwrap();

        let mut back = st.clone();
        back.apply_flips(&g, &[3, 17, 40]).unwrap();
        back.apply_flips(&g, &[40, 3, 17]).unwrap();
        assert_eq!(back, st);

        let mut all = st.clone();
        let every: Vec<usize> = (0..50).collect();
        all.apply_flips(&g, &every).unwrap();
        assert_eq!(all.cut(), st.cut());
        assert_eq!((all.vol_c1(), all.vol_c2()), (st.vol_c2(), st.vol_c1()));
        assert_eq!(evaluate(&spec, &all).objective, evaluate(&spec, &st).objective);
    }

    #[test]
    fn random_flips_match_recomputation() {
        let g = planted_partition(50, 2, 0.3, 0.05, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spins: Vec<i8> = (0..50).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        let mut st = PartitionState::new(&g, spins).unwrap();
        let mut nodes: Vec<usize> = (0..50).collect();
        for i in 0..20 {
            let j = rng.gen_range(i..50);
            nodes.swap(i, j);
        }
        st.apply_flips(&g, &nodes[..20]).unwrap();
        let fresh = PartitionState::new(&g, st.spins().to_vec()).unwrap();
        assert_eq!(st, fresh);
    }

    #[test]
    fn apply_flips_rejects_duplicates_and_out_of_range() {
        let g = p4();
        let mut st = PartitionState::uniform(&g, -1);
        assert!(matches!(
            st.apply_flips(&g, &[1, 2, 1]),
            Err(ObjectiveError::DuplicateFlip(1))
        ));
        assert!(matches!(
            st.apply_flips(&g, &[9]),
            Err(ObjectiveError::NodeOutOfRange { node: 9, .. })
        ));
        assert_eq!(st, PartitionState::uniform(&g, -1));
    }

    #[test]
    fn invalid_spins_and_specs() {
        let g = p4();
        assert!(PartitionState::new(&g, vec![1, 0, 1, 1]).is_err());
        assert!(PartitionState::new(&g, vec![1, 1]).is_err());
        assert!(ProblemSpec::modularity(0.0).is_err());
        assert!(ProblemSpec::graph_partitioning(-1.0, 1.0, 3.0).is_err());
        let spec = ProblemSpec::modularity(3.0).unwrap();
        assert_eq!(spec.alpha(), 1.0 / 6.0);
        assert_eq!(spec.beta(), 1.0);
    }

    #[test]
    fn default_gp_alpha_blocks_single_moves_off_balance() {
        let g = planted_partition(40, 2, 0.6, 0.1, 4).unwrap();
        let spec = ProblemSpec::for_graph(ProblemKind::GraphPartitioning, &g).unwrap();
        let spins: Vec<i8> = (0..40).map(|u| if u % 2 == 0 { -1 } else { 1 }).collect();
        let st = PartitionState::new(&g, spins).unwrap();
        assert_eq!(evaluate(&spec, &st).imbalance, 0.0);
        assert!(gains(&g, &spec, &st).iter().all(|&x| x < 0.0));
    }
}
