//! Matching-based coarsening for the V-cycle, and projection of coarse
//! solutions back to finer levels.
//!
//! Edges are rated with `w(u,v)^2 / (v_u v_v)` ("expansion*2") and matched
//! with the Global Path Algorithm: a greedy pass in descending rating builds
//! vertex-disjoint paths and even cycles, then a dynamic program picks the
//! heaviest matching on each of them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph::WeightedGraph;
use crate::objective::{update_weights_for_modularity, ProblemKind, ProblemSpec};

#[derive(Debug, thiserror::Error)]
pub enum CoarsenError {
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("coarse node {coarse} of fine node {fine} has no assignment ({len} coarse spins)")]
    MissingAssignment {
        fine: usize,
        coarse: usize,
        len: usize,
    },
    #[error("stop size must be at least 2, got {0}")]
    StopSize(usize),
}

/// An undirected edge `(u, v)` with `u < v` and its rating.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatedEdge {
    pub u: usize,
    pub v: usize,
    pub rating: f64,
}

/// Rates every undirected edge by `w^2 / (v_u v_v)`.
pub fn rate_edges(g: &WeightedGraph) -> Vec<RatedEdge> {
    g.edges()
        .map(|(u, v, w)| RatedEdge {
            u,
            v,
            rating: w * w / (g.volume(u) * g.volume(v)),
        })
        .collect()
}

const NONE: usize = usize::MAX;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Heaviest matching on a path, edges in path order. Ties keep the earlier edge.
fn path_matching(ratings: &[f64]) -> (f64, Vec<usize>) {
    let len = ratings.len();
    let mut best = vec![0.0; len];
    let mut take = vec![false; len];
    for i in 0..len {
        let skip = if i >= 1 { best[i - 1] } else { 0.0 };
        let with = ratings[i] + if i >= 2 { best[i - 2] } else { 0.0 };
        if with > skip {
            best[i] = with;
            take[i] = true;
        } else {
            best[i] = skip;
        }
    }
    let mut chosen = Vec::new();
    let mut i = len;
    while i > 0 {
        if take[i - 1] {
            chosen.push(i - 1);
            i = i.saturating_sub(2);
        } else {
            i -= 1;
        }
    }
    chosen.reverse();
    (best.last().copied().unwrap_or(0.0), chosen)
}

/// Global Path Algorithm matching.
///
/// Edges are scanned in descending rating; ties go to the lower endpoint,
/// then the lower other endpoint. With `tie_seed = Some(s)` node ids are
/// replaced by a seeded random ranking for tie-breaking only. An edge joins
/// the path/cycle structure when both endpoints have structure degree at most
/// one and it does not close an odd cycle.
pub fn match_edges(g: &WeightedGraph, ratings: &[RatedEdge], tie_seed: Option<u64>) -> Vec<(usize, usize)> {
    let n = g.n();
    let rank: Vec<usize> = match tie_seed {
        None => (0..n).collect(),
        Some(seed) => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            perm
        }
    };
    let mut order: Vec<&RatedEdge> = ratings.iter().collect();
    order.sort_by(|a, b| {
        let ka = (rank[a.u].min(rank[a.v]), rank[a.u].max(rank[a.v]));
        let kb = (rank[b.u].min(rank[b.v]), rank[b.u].max(rank[b.v]));
        b.rating.total_cmp(&a.rating).then(ka.cmp(&kb))
    });

    let mut link = vec![[NONE; 2]; n];
    let mut link_rating = vec![[0.0f64; 2]; n];
    let mut degree = vec![0usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut comp_edges = vec![0usize; n];
    for e in order {
        let (u, v) = (e.u, e.v);
        if degree[u] >= 2 || degree[v] >= 2 {
            continue;
        }
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            // closing a path with L edges makes a cycle of length L + 1
            if (comp_edges[ru] + 1) % 2 == 1 {
                continue;
            }
            comp_edges[ru] += 1;
        } else {
            parent[rv] = ru;
            comp_edges[ru] += comp_edges[rv] + 1;
        }
        link[u][degree[u]] = v;
        link_rating[u][degree[u]] = e.rating;
        degree[u] += 1;
        link[v][degree[v]] = u;
        link_rating[v][degree[v]] = e.rating;
        degree[v] += 1;
    }

    let mut visited = vec![false; n];
    let mut matching = Vec::new();
    let walk = |start: usize, visited: &mut [bool]| -> (Vec<usize>, Vec<f64>) {
        let mut nodes = vec![start];
        let mut ratings = Vec::new();
        visited[start] = true;
        let mut prev = NONE;
        let mut cur = start;
        loop {
            let slot = (0..degree[cur]).find(|&s| link[cur][s] != prev && !visited[link[cur][s]]);
            let Some(slot) = slot else {
                // closing edge of a cycle back to the start
                if degree[cur] == 2 && nodes.len() > 2 {
                    let back = (0..2).find(|&s| link[cur][s] == start);
                    if let Some(s) = back {
                        ratings.push(link_rating[cur][s]);
                    }
                }
                break;
            };
            let next = link[cur][slot];
            ratings.push(link_rating[cur][slot]);
            visited[next] = true;
            nodes.push(next);
            prev = cur;
            cur = next;
        }
        (nodes, ratings)
    };

    for start in 0..n {
        if visited[start] || degree[start] != 1 {
            continue;
        }
        let (nodes, ratings) = walk(start, &mut visited);
        let (_, chosen) = path_matching(&ratings);
        matching.extend(chosen.into_iter().map(|i| (nodes[i], nodes[i + 1])));
    }
    for start in 0..n {
        if visited[start] || degree[start] != 2 {
            continue;
        }
        let (nodes, ratings) = walk(start, &mut visited);
        let len = ratings.len();
        let edge = |i: usize| (nodes[i], nodes[(i + 1) % len]);
        // either drop edge 0, or take it and drop both of its neighbors
        let (skip_total, skip) = path_matching(&ratings[1..]);
        let (inner_total, inner) = path_matching(&ratings[2..len - 1]);
        if ratings[0] + inner_total > skip_total {
            matching.push(edge(0));
            matching.extend(inner.into_iter().map(|i| edge(i + 2)));
        } else {
            matching.extend(skip.into_iter().map(|i| edge(i + 1)));
        }
    }
    for pair in &mut matching {
        if pair.0 > pair.1 {
            *pair = (pair.1, pair.0);
        }
    }
    matching.sort_unstable();
    matching
}

/// Contracts matched pairs into single nodes.
///
/// Coarse ids follow the lowest fine id of each group. Volumes add, parallel
/// edges are summed and contracted edges vanish.
pub fn contract(
    g: &WeightedGraph,
    matching: &[(usize, usize)],
) -> Result<(WeightedGraph, Vec<usize>), CoarsenError> {
    let n = g.n();
    let mut mate = vec![NONE; n];
    for &(u, v) in matching {
        if u >= n || v >= n || u == v {
            return Err(CoarsenError::InvalidMatching(format!("bad pair ({u}, {v})")));
        }
        if mate[u] != NONE || mate[v] != NONE {
            return Err(CoarsenError::InvalidMatching(format!(
                "pair ({u}, {v}) reuses a matched node"
            )));
        }
        if g.edge_weight(u, v).is_none() {
            return Err(CoarsenError::InvalidMatching(format!("({u}, {v}) is not an edge")));
        }
        mate[u] = v;
        mate[v] = u;
    }
    let mut coarse_of = vec![NONE; n];
    let mut volume = Vec::with_capacity(n - matching.len());
    for u in 0..n {
        if coarse_of[u] != NONE {
            continue;
        }
        let c = volume.len();
        coarse_of[u] = c;
        let mut vol = g.volume(u);
        if mate[u] != NONE {
            coarse_of[mate[u]] = c;
            vol += g.volume(mate[u]);
        }
        volume.push(vol);
    }
    let edges = g.edges().filter_map(|(u, v, w)| {
        let (cu, cv) = (coarse_of[u], coarse_of[v]);
        (cu != cv).then_some((cu, cv, w))
    });
    let coarse = WeightedGraph::from_edges_merged(volume.len(), edges)
        .expect("contraction of a valid graph is valid")
        .with_volumes(volume)
        .expect("summed volumes are valid");
    Ok((coarse, coarse_of))
}

/// Gives every fine node the spin of its coarse image.
pub fn project(coarse_spins: &[i8], coarse_of: &[usize]) -> Result<Vec<i8>, CoarsenError> {
    coarse_of
        .iter()
        .enumerate()
        .map(|(fine, &c)| {
            coarse_spins.get(c).copied().ok_or(CoarsenError::MissingAssignment {
                fine,
                coarse: c,
                len: coarse_spins.len(),
            })
        })
        .collect()
}

/// Coarsening rounds that shrink the graph by less than this fraction end
/// construction.
pub const STALL_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelSummary {
    pub n: usize,
    pub m_level: f64,
    pub sum_volume: f64,
}

/// Graphs from finest (index 0) to coarsest, with fine-to-coarse maps.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    levels: Vec<WeightedGraph>,
    maps: Vec<Vec<usize>>,
    stalled: bool,
}

impl Hierarchy {
    pub fn levels(&self) -> &[WeightedGraph] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &WeightedGraph {
        &self.levels[i]
    }

    pub fn finest(&self) -> &WeightedGraph {
        &self.levels[0]
    }

    pub fn coarsest(&self) -> &WeightedGraph {
        self.levels.last().expect("hierarchy is never empty")
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Map from nodes of level `i - 1` to nodes of level `i`, for `i >= 1`.
    pub fn coarse_of(&self, i: usize) -> &[usize] {
        &self.maps[i - 1]
    }

    /// True when construction ended because a round shrank the graph by
    /// less than [`STALL_FRACTION`] rather than by reaching the stop size.
    pub fn stalled(&self) -> bool {
        self.stalled
    }

    pub fn summaries(&self) -> Vec<LevelSummary> {
        self.levels
            .iter()
            .map(|g| LevelSummary {
                n: g.n(),
                m_level: g.total_edge_weight(),
                sum_volume: g.total_volume(),
            })
            .collect()
    }

    /// One JSON record per line, finest level first.
    pub fn dump_json_lines(&self) -> String {
        self.summaries()
            .iter()
            .map(|s| serde_json::to_string(s).expect("summary serializes") + "\n")
            .collect()
    }
}

/// Rates, matches and contracts until `|V| <= stop_size` or a round stalls.
///
/// For modularity problems the finest graph is first reweighted so volumes
/// equal weighted degrees.
pub fn build_hierarchy(
    g: &WeightedGraph,
    spec: &ProblemSpec,
    stop_size: usize,
    seed: u64,
) -> Result<Hierarchy, CoarsenError> {
    if stop_size < 2 {
        return Err(CoarsenError::StopSize(stop_size));
    }
    let finest = match spec.kind() {
        ProblemKind::Modularity => update_weights_for_modularity(g),
        ProblemKind::GraphPartitioning => g.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = vec![finest];
    let mut maps = Vec::new();
    let mut stalled = false;
    loop {
        let current = levels.last().unwrap();
        let n = current.n();
        if n <= stop_size {
            break;
        }
        let ratings = rate_edges(current);
        let matching = match_edges(current, &ratings, Some(rng.gen()));
        let (coarse, map) = contract(current, &matching)?;
        let shrunk = coarse.n() < n;
        let small_step = (coarse.n() as f64) > (1.0 - STALL_FRACTION) * n as f64;
        if shrunk {
            levels.push(coarse);
            maps.push(map);
        }
        if small_step {
            stalled = levels.last().unwrap().n() > stop_size;
            break;
        }
    }
    Ok(Hierarchy {
        levels,
        maps,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_metis, planted_partition};
    use crate::objective::{evaluate, PartitionState};

    fn p4() -> WeightedGraph {
        parse_metis("4 3\n2\n1 3\n2 4\n3\n").unwrap()
    }

    fn rated(edges: &[(usize, usize, f64)]) -> Vec<RatedEdge> {
        edges
            .iter()
            .map(|&(u, v, rating)| RatedEdge { u, v, rating })
            .collect()
    }

    #[test]
    fn expansion_squared_ratings() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 2.0)]).unwrap();
        assert_eq!(rate_edges(&g)[0].rating, 4.0);
        let g = WeightedGraph::from_edges(2, [(0, 1, 3.0)])
            .unwrap()
            .with_volumes(vec![2.0, 6.0])
            .unwrap();
        assert_eq!(rate_edges(&g)[0].rating, 0.75);
        let cyc = WeightedGraph::from_edges(5, (0..5).map(|u| (u, (u + 1) % 5, 1.0))).unwrap();
        assert!(rate_edges(&cyc).iter().all(|e| e.rating == 1.0));
    }

    #[test]
    fn path_dp_takes_outer_edges() {
        let g = p4();
        let m = match_edges(&g, &rated(&[(0, 1, 5.0), (1, 2, 1.0), (2, 3, 5.0)]), None);
        assert_eq!(m, vec![(0, 1), (2, 3)]);
        let m = match_edges(&g, &rated(&[(0, 1, 1.0), (1, 2, 5.0), (2, 3, 1.0)]), None);
        assert_eq!(m, vec![(1, 2)]);
    }

    #[test]
    fn single_edge_and_star() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(match_edges(&g, &rate_edges(&g), None), vec![(0, 1)]);
        let star = WeightedGraph::from_edges(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert_eq!(match_edges(&star, &rate_edges(&star), None), vec![(0, 1)]);
    }

    #[test]
    fn odd_cycle_edge_is_rejected_even_cycle_kept() {
        let tri = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let m = match_edges(&tri, &rate_edges(&tri), None);
        assert_eq!(m.len(), 1);
        let c4 = WeightedGraph::from_edges(4, (0..4).map(|u| (u, (u + 1) % 4, 1.0))).unwrap();
        let r = rated(&[(0, 1, 3.0), (1, 2, 1.0), (2, 3, 3.0), (0, 3, 2.0)]);
        assert_eq!(match_edges(&c4, &r, None), vec![(0, 1), (2, 3)]);
        let r = rated(&[(0, 1, 1.0), (1, 2, 3.0), (2, 3, 1.0), (0, 3, 3.0)]);
        assert_eq!(match_edges(&c4, &r, None), vec![(0, 3), (1, 2)]);
    }

    #[test]
    fn matching_is_valid_on_random_graphs() {
        for seed in 0..10 {
            let g = planted_partition(120, 3, 0.2, 0.02, seed).unwrap();
            let m = match_edges(&g, &rate_edges(&g), Some(seed));
            let mut used = vec![false; g.n()];
            for &(u, v) in &m {
                assert!(g.edge_weight(u, v).is_some());
                assert!(!used[u] && !used[v]);
                used[u] = true;
                used[v] = true;
            }
            assert!(m.len() * 4 > g.n(), "matching too small: {}", m.len());
        }
    }

    #[test]
    fn contraction_examples() {
        let (c, map) = contract(&p4(), &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(map, vec![0, 0, 1, 1]);
        assert_eq!(c.n(), 2);
        assert_eq!(c.edge_weight(0, 1), Some(1.0));
        assert_eq!(c.volumes(), &[2.0, 2.0]);

        let (same, map) = contract(&p4(), &[]).unwrap();
        assert_eq!(same, p4());
        assert_eq!(map, vec![0, 1, 2, 3]);

        let tri = WeightedGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let (c, _) = contract(&tri, &[(0, 1)]).unwrap();
        assert_eq!(c.n(), 2);
        assert_eq!(c.num_edges(), 1);
        assert_eq!(c.edge_weight(0, 1), Some(2.0));
        assert_eq!(c.total_edge_weight(), 2.0);
        c.validate().unwrap();
    }

    #[test]
    fn contraction_rejects_invalid_matching() {
        assert!(contract(&p4(), &[(0, 1), (1, 2)]).is_err());
        assert!(contract(&p4(), &[(0, 2)]).is_err());
        assert!(contract(&p4(), &[(0, 0)]).is_err());
    }

    #[test]
    fn contraction_preserves_volume_and_drops_internal_weight() {
        let g = planted_partition(200, 2, 0.1, 0.01, 11).unwrap();
        let m = match_edges(&g, &rate_edges(&g), Some(3));
        let internal: f64 = m.iter().map(|&(u, v)| g.edge_weight(u, v).unwrap()).sum();
        let (c, _) = contract(&g, &m).unwrap();
        c.validate().unwrap();
        assert_eq!(c.total_volume(), g.total_volume());
        assert_eq!(c.total_edge_weight(), g.total_edge_weight() - internal);
    }

    #[test]
    fn projection() {
        assert_eq!(project(&[1, -1], &[0, 0, 1, 1]).unwrap(), vec![1, 1, -1, -1]);
        assert_eq!(project(&[1, -1, 1], &[0, 1, 2]).unwrap(), vec![1, -1, 1]);
        assert!(matches!(
            project(&[1], &[0, 1]),
            Err(CoarsenError::MissingAssignment { fine: 1, coarse: 1, len: 1 })
        ));
    }

    #[test]
    fn hierarchy_on_path_and_small_graphs() {
        let g = p4();
        let spec = ProblemSpec::for_graph(ProblemKind::GraphPartitioning, &g).unwrap();
        let h = build_hierarchy(&g, &spec, 2, 0).unwrap();
        assert!(h.coarsest().n() <= 2 || h.stalled());
        assert!(h.depth() >= 2);
        for lv in h.levels() {
            assert_eq!(lv.total_volume(), 4.0);
        }
        let h = build_hierarchy(&g, &spec, 4, 0).unwrap();
        assert_eq!(h.depth(), 1);
        assert!(build_hierarchy(&g, &spec, 1, 0).is_err());
    }

    #[test]
    fn modularity_hierarchy_keeps_two_m() {
        let g = planted_partition(300, 2, 0.08, 0.01, 5).unwrap();
        let spec = ProblemSpec::modularity(g.total_edge_weight()).unwrap();
        let h = build_hierarchy(&g, &spec, 20, 9).unwrap();
        let two_m = 2.0 * g.total_edge_weight();
        for (i, lv) in h.levels().iter().enumerate() {
            assert_eq!(lv.total_volume(), two_m);
            if i > 0 {
                assert!(lv.n() < h.level(i - 1).n());
                let map = h.coarse_of(i);
                let mut count = vec![0usize; lv.n()];
                map.iter().for_each(|&c| count[c] += 1);
                assert!(count.iter().all(|&c| c == 1 || c == 2));
            }
        }
        assert!(h.coarsest().n() <= 20 || h.stalled());
        assert_eq!(h.dump_json_lines().lines().count(), h.depth());
    }

    #[test]
    fn projected_objective_is_exact() {
        let g = planted_partition(150, 2, 0.1, 0.02, 8).unwrap();
        for kind in [ProblemKind::GraphPartitioning, ProblemKind::Modularity] {
            let spec = ProblemSpec::for_graph(kind, &g).unwrap();
            let h = build_hierarchy(&g, &spec, 10, 1).unwrap();
            let top = h.coarsest();
            let spins: Vec<i8> = (0..top.n()).map(|u| if u % 3 == 0 { 1 } else { -1 }).collect();
            let mut spins = spins;
            let mut expected = evaluate(&spec, &PartitionState::new(top, spins.clone()).unwrap());
            for i in (1..h.depth()).rev() {
                spins = project(&spins, h.coarse_of(i)).unwrap();
                let fine = evaluate(&spec, &PartitionState::new(h.level(i - 1), spins.clone()).unwrap());
                let scale = expected.objective.abs().max(1.0);
                assert!((fine.objective - expected.objective).abs() <= 1e-9 * scale);
                expected = fine;
            }
        }
    }
}
