//! Sparse weighted undirected graphs: ingestion, generation and BFS truncation.
//!
//! Every graph is stored in CSR form with neighbor lists sorted by id. Node
//! volumes, weighted degrees and the total edge weight are cached on
//! construction; graphs are immutable afterwards.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: node index {id} out of range (n = {n})")]
    NodeOutOfRange { line: usize, id: usize, n: usize },
    #[error("line {line}: nonpositive weight {value}")]
    NonPositiveWeight { line: usize, value: f64 },
    #[error("line {line}: adjacency is not symmetric for edge ({u}, {v})")]
    Asymmetric { line: usize, u: usize, v: usize },
    #[error("line {line}: header declares {declared} edges but {found} were read")]
    EdgeCountMismatch {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    NodeIndex { u: usize, v: usize, n: usize },
    #[error("edge ({u}, {v}) has nonpositive weight {w}")]
    EdgeWeight { u: usize, v: usize, w: f64 },
    #[error("node {node} has invalid volume {value}")]
    Volume { node: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// On-disk graph formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Metis,
    #[serde(alias = "edge_list")]
    Edgelist,
}

impl FromStr for GraphFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "metis" => Ok(Self::Metis),
            "edgelist" | "edge_list" => Ok(Self::Edgelist),
            other => Err(format!("unknown graph format {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    volume: Vec<f64>,
    weighted_degree: Vec<f64>,
    total_edge_weight: f64,
}

impl WeightedGraph {
    /// Builds a graph with unit volumes from undirected edges given once each.
    ///
    /// Parallel edges (in either orientation) are summed and self-loops are
    /// dropped, both with a warning.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::assemble(n, edges, true)
    }

    /// Like [`from_edges`](Self::from_edges) but merges parallel edges and
    /// drops self-loops silently, as contraction produces both routinely.
    pub(crate) fn from_edges_merged<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::assemble(n, edges, false)
    }

    fn assemble<I>(n: usize, edges: I, report: bool) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut directed = Vec::new();
        let mut self_loops = 0usize;
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeIndex { u, v, n });
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GraphError::EdgeWeight { u, v, w });
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            directed.push((u, v, w));
            directed.push((v, u, w));
        }
        if report && self_loops > 0 {
            warn!("dropped {self_loops} self-loop(s)");
        }
        // Stable sort keeps input order among duplicates, so both orientations
        // of a parallel edge are summed in the same order and stay identical.
        directed.sort_by_key(|&(u, v, _)| (u, v));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(directed.len());
        let mut duplicates = 0usize;
        for (u, v, w) in directed {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => {
                    last.2 += w;
                    duplicates += 1;
                }
                _ => merged.push((u, v, w)),
            }
        }
        if report && duplicates > 0 {
            warn!("summed {} duplicate edge(s)", duplicates / 2);
        }
        let mut offsets = vec![0usize; n + 1];
        for &(u, _, _) in &merged {
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = merged.iter().map(|e| e.1).collect();
        let weights = merged.iter().map(|e| e.2).collect();
        Ok(Self::from_csr(offsets, targets, weights, vec![1.0; n]))
    }

    /// Assembles a graph from sorted, symmetric CSR arrays without self-loops.
    pub(crate) fn from_csr(
        offsets: Vec<usize>,
        targets: Vec<usize>,
        weights: Vec<f64>,
        volume: Vec<f64>,
    ) -> Self {
        let n = volume.len();
        let mut g = Self {
            offsets,
            targets,
            weights,
            volume,
            weighted_degree: Vec::new(),
            total_edge_weight: 0.0,
        };
        g.weighted_degree = (0..n).map(|u| g.recompute_degree(u)).collect();
        g.total_edge_weight = g.recompute_total_weight();
        g
    }

    /// Replaces node volumes.
    ///
    /// Volumes must be finite and nonnegative. Zero only arises for isolated
    /// nodes under degree weighting, where it is the exact value.
    pub fn with_volumes(mut self, volume: Vec<f64>) -> Result<Self, GraphError> {
        if volume.len() != self.n() {
            return Err(GraphError::InvalidParameter(format!(
                "expected {} volumes, got {}",
                self.n(),
                volume.len()
            )));
        }
        if let Some((node, &value)) = volume
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(GraphError::Volume { node, value });
        }
        self.volume = volume;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.volume.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn edge_weights(&self, u: usize) -> &[f64] {
        &self.weights[self.offsets[u]..self.offsets[u + 1]]
    }

    /// `(neighbor, weight)` pairs of `u` in ascending neighbor order.
    pub fn adjacency(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbors(u)
            .iter()
            .copied()
            .zip(self.edge_weights(u).iter().copied())
    }

    /// Undirected edges `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.adjacency(u)
                .filter(move |&(v, _)| v > u)
                .map(move |(v, w)| (u, v, w))
        })
    }

    /// Weight of edge `(u, v)`, or `None` if absent.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        let nbrs = self.neighbors(u);
        nbrs.binary_search(&v)
            .ok()
            .map(|pos| self.edge_weights(u)[pos])
    }

    /// Unweighted degree.
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n()).map(|u| self.degree(u)).max().unwrap_or(0)
    }

    pub fn volume(&self, u: usize) -> f64 {
        self.volume[u]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    pub fn total_volume(&self) -> f64 {
        self.volume.iter().sum()
    }

    pub fn max_volume(&self) -> f64 {
        self.volume.iter().copied().fold(0.0, f64::max)
    }

    pub fn weighted_degree(&self, u: usize) -> f64 {
        self.weighted_degree[u]
    }

    pub fn weighted_degrees(&self) -> &[f64] {
        &self.weighted_degree
    }

    pub fn max_weighted_degree(&self) -> f64 {
        self.weighted_degree.iter().copied().fold(0.0, f64::max)
    }

    /// Sum of weights over undirected edges.
    pub fn total_edge_weight(&self) -> f64 {
        self.total_edge_weight
    }

    fn recompute_degree(&self, u: usize) -> f64 {
        self.edge_weights(u).iter().sum()
    }

    fn recompute_total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Checks every structural invariant against a fresh recomputation.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.n();
        if self.offsets.len() != n + 1 || self.weighted_degree.len() != n {
            return Err(GraphError::Invariant("array lengths disagree".into()));
        }
        for u in 0..n {
            let nbrs = self.neighbors(u);
            if nbrs.windows(2).any(|p| p[0] >= p[1]) {
                return Err(GraphError::Invariant(format!(
                    "neighbors of {u} not strictly sorted"
                )));
            }
            for (v, w) in self.adjacency(u) {
                if v == u {
                    return Err(GraphError::Invariant(format!("self-loop at {u}")));
                }
                if !(w > 0.0) {
                    return Err(GraphError::Invariant(format!("weight {w} on ({u}, {v})")));
                }
                if self.edge_weight(v, u) != Some(w) {
                    return Err(GraphError::Invariant(format!("asymmetric edge ({u}, {v})")));
                }
            }
            if !(self.volume[u] >= 0.0) || (self.volume[u] == 0.0 && self.degree(u) > 0) {
                return Err(GraphError::Invariant(format!("invalid volume {} at {u}", self.volume[u])));
            }
            if self.recompute_degree(u) != self.weighted_degree[u] {
                return Err(GraphError::Invariant(format!("stale weighted degree at {u}")));
            }
        }
        if self.recompute_total_weight() != self.total_edge_weight {
            return Err(GraphError::Invariant("stale total edge weight".into()));
        }
        Ok(())
    }

    /// Subgraph induced by `nodes`; node `nodes[i]` becomes node `i`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> WeightedGraph {
        let mut new_id = vec![usize::MAX; self.n()];
        for (i, &u) in nodes.iter().enumerate() {
            new_id[u] = i;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for &u in nodes {
            row.clear();
            row.extend(
                self.adjacency(u)
                    .filter(|&(v, _)| new_id[v] != usize::MAX)
                    .map(|(v, w)| (new_id[v], w)),
            );
            row.sort_by_key(|e| e.0);
            targets.extend(row.iter().map(|e| e.0));
            weights.extend(row.iter().map(|e| e.1));
            offsets.push(targets.len());
        }
        let volume = nodes.iter().map(|&u| self.volume[u]).collect();
        WeightedGraph::from_csr(offsets, targets, weights, volume)
    }
}

/// Reads a graph file in the given format.
pub fn load_graph(path: impl AsRef<Path>, format: GraphFormat) -> Result<WeightedGraph, GraphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        GraphFormat::Metis => parse_metis(&text),
        GraphFormat::Edgelist => parse_edgelist(&text),
    }
}

pub fn save_graph(
    g: &WeightedGraph,
    path: impl AsRef<Path>,
    format: GraphFormat,
) -> Result<(), GraphError> {
    let path = path.as_ref();
    let text = match format {
        GraphFormat::Metis => to_metis(g),
        GraphFormat::Edgelist => to_edgelist(g),
    };
    fs::write(path, text).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_num<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        reason: format!("cannot parse {what} from {tok:?}"),
    })
}

fn parse_weight(tok: &str, line: usize) -> Result<f64, GraphError> {
    let w: f64 = parse_num(tok, line, "weight")?;
    if !(w > 0.0 && w.is_finite()) {
        return Err(GraphError::NonPositiveWeight { line, value: w });
    }
    Ok(w)
}

/// Parses METIS text: header `n m [fmt [ncon]]`, then one line per node with
/// 1-based neighbor ids. `%` starts a comment line.
pub fn parse_metis(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim_start().starts_with('%'));

    let (header_line, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or(GraphError::MalformedHeader {
            line: 1,
            reason: "empty file".into(),
        })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() < 2 || toks.len() > 4 {
        return Err(GraphError::MalformedHeader {
            line: header_line,
            reason: format!("expected `n m [fmt [ncon]]`, got {header:?}"),
        });
    }
    let bad_header = |reason: String| GraphError::MalformedHeader {
        line: header_line,
        reason,
    };
    let n: usize = toks[0]
        .parse()
        .map_err(|_| bad_header(format!("bad node count {:?}", toks[0])))?;
    let declared_m: usize = toks[1]
        .parse()
        .map_err(|_| bad_header(format!("bad edge count {:?}", toks[1])))?;
    let fmt = toks.get(2).copied().unwrap_or("0");
    if fmt.len() > 3 || !fmt.chars().all(|c| c == '0' || c == '1') {
        return Err(bad_header(format!("bad fmt field {fmt:?}")));
    }
    let fmt = format!("{fmt:0>3}");
    let fmt = fmt.as_bytes();
    let has_vsize = fmt[0] == b'1';
    let has_vwgt = fmt[1] == b'1';
    let has_ewgt = fmt[2] == b'1';
    if let Some(ncon) = toks.get(3) {
        if *ncon != "1" || !has_vwgt {
            return Err(bad_header(format!("ncon {ncon:?} unsupported (only 1)")));
        }
    }

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut row_line = Vec::with_capacity(n);
    let mut volume = Vec::with_capacity(n);
    let mut self_loops = 0usize;
    let mut duplicates = 0usize;
    let mut last_line = header_line;
    while rows.len() < n {
        let Some((line, l)) = lines.next() else {
            return Err(GraphError::Parse {
                line: last_line,
                reason: format!("expected {n} node lines, found {}", rows.len()),
            });
        };
        last_line = line;
        let u = rows.len();
        let mut toks = l.split_whitespace();
        if has_vsize && toks.next().is_none() {
            return Err(GraphError::Parse {
                line,
                reason: "missing node size".into(),
            });
        }
        let vol = if has_vwgt {
            let tok = toks.next().ok_or(GraphError::Parse {
                line,
                reason: "missing node weight".into(),
            })?;
            parse_weight(tok, line)?
        } else {
            1.0
        };
        let mut row: Vec<(usize, f64)> = Vec::new();
        while let Some(tok) = toks.next() {
            let id: usize = parse_num(tok, line, "neighbor id")?;
            if id == 0 || id > n {
                return Err(GraphError::NodeOutOfRange { line, id, n });
            }
            let w = if has_ewgt {
                let tok = toks.next().ok_or(GraphError::Parse {
                    line,
                    reason: format!("missing weight for neighbor {id}"),
                })?;
                parse_weight(tok, line)?
            } else {
                1.0
            };
            if id - 1 == u {
                self_loops += 1;
                continue;
            }
            row.push((id - 1, w));
        }
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (v, w) in row {
            match merged.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 += w;
                    duplicates += 1;
                }
                _ => merged.push((v, w)),
            }
        }
        rows.push(merged);
        row_line.push(line);
        volume.push(vol);
    }
    for (line, l) in lines {
        if !l.trim().is_empty() {
            return Err(GraphError::Parse {
                line,
                reason: format!("unexpected content after {n} node lines"),
            });
        }
    }
    if self_loops > 0 {
        warn!("dropped {self_loops} self-loop entr(ies)");
    }
    if duplicates > 0 {
        warn!("summed {duplicates} duplicate neighbor entr(ies)");
    }

    for (u, row) in rows.iter().enumerate() {
        for &(v, w) in row {
            let back = rows[v]
                .binary_search_by_key(&u, |e| e.0)
                .ok()
                .map(|pos| rows[v][pos].1);
            if back != Some(w) {
                return Err(GraphError::Asymmetric {
                    line: row_line[u],
                    u,
                    v,
                });
            }
        }
    }
    let entries: usize = rows.iter().map(Vec::len).sum();
    let found = entries / 2;
    if found != declared_m && found + self_loops / 2 != declared_m {
        return Err(GraphError::EdgeCountMismatch {
            line: header_line,
            declared: declared_m,
            found,
        });
    }

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut targets = Vec::with_capacity(entries);
    let mut weights = Vec::with_capacity(entries);
    for row in rows {
        targets.extend(row.iter().map(|e| e.0));
        weights.extend(row.iter().map(|e| e.1));
        offsets.push(targets.len());
    }
    Ok(WeightedGraph::from_csr(offsets, targets, weights, volume))
}

/// Parses a 0-based edge list: `u v [w]` per line, one direction per edge.
/// `#` and `%` start comment lines.
pub fn parse_edgelist(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut edges = Vec::new();
    let mut n = 0usize;
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(GraphError::Parse {
                line,
                reason: format!("expected `u v [w]`, got {t:?}"),
            });
        }
        let u: usize = parse_num(toks[0], line, "node id")?;
        let v: usize = parse_num(toks[1], line, "node id")?;
        let w = match toks.get(2) {
            Some(tok) => parse_weight(tok, line)?,
            None => 1.0,
        };
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    WeightedGraph::from_edges(n, edges)
}

fn all_unit(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == 1.0)
}

/// Serializes to METIS, emitting node/edge weights only when non-unit.
pub fn to_metis(g: &WeightedGraph) -> String {
    let has_vwgt = !all_unit(&g.volume);
    let has_ewgt = !all_unit(&g.weights);
    let mut out = String::new();
    match (has_vwgt, has_ewgt) {
        (false, false) => writeln!(out, "{} {}", g.n(), g.num_edges()),
        (false, true) => writeln!(out, "{} {} 1", g.n(), g.num_edges()),
        (true, false) => writeln!(out, "{} {} 10", g.n(), g.num_edges()),
        (true, true) => writeln!(out, "{} {} 11", g.n(), g.num_edges()),
    }
    .unwrap();
    for u in 0..g.n() {
        let mut fields: Vec<String> = Vec::with_capacity(1 + 2 * g.degree(u));
        if has_vwgt {
            fields.push(g.volume[u].to_string());
        }
        for (v, w) in g.adjacency(u) {
            fields.push((v + 1).to_string());
            if has_ewgt {
                fields.push(w.to_string());
            }
        }
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

/// Serializes to a weighted edge list. Volumes are not representable and are
/// dropped; isolated trailing nodes are lost on reload.
pub fn to_edgelist(g: &WeightedGraph) -> String {
    let mut out = String::new();
    for (u, v, w) in g.edges() {
        writeln!(out, "{u} {v} {w}").unwrap();
    }
    out
}

/// Result of [`bfs_truncate`].
#[derive(Clone, Debug)]
pub struct Truncation {
    pub graph: WeightedGraph,
    /// `original_ids[i]` is the id of new node `i` in the input graph.
    pub original_ids: Vec<usize>,
    /// Number of times the BFS restarted because the frontier ran dry.
    pub restarts: usize,
}

/// Induced subgraph on the first `target_n` nodes discovered by BFS from the
/// lowest-id node of median unweighted degree.
///
/// The median is the element at index `n / 2` of the sorted degree sequence.
/// Neighbors are enqueued in ascending id order. If the component is
/// exhausted early, the search restarts from the lowest unvisited id. New ids
/// follow discovery order.
pub fn bfs_truncate(g: &WeightedGraph, target_n: usize) -> Truncation {
    let n = g.n();
    let target = target_n.min(n);
    if target == 0 {
        return Truncation {
            graph: g.induced_subgraph(&[]),
            original_ids: Vec::new(),
            restarts: 0,
        };
    }
    let mut degrees: Vec<usize> = (0..n).map(|u| g.degree(u)).collect();
    degrees.sort_unstable();
    let median = degrees[n / 2];
    let start = (0..n).find(|&u| g.degree(u) == median).unwrap();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(target);
    let mut queue = VecDeque::new();
    let mut restarts = 0usize;
    let mut next_unvisited = 0usize;
    visited[start] = true;
    order.push(start);
    queue.push_back(start);
    'outer: while order.len() < target {
        let Some(u) = queue.pop_front() else {
            while visited[next_unvisited] {
                next_unvisited += 1;
            }
            restarts += 1;
            let s = next_unvisited;
            visited[s] = true;
            order.push(s);
            queue.push_back(s);
            continue;
        };
        for &v in g.neighbors(u) {
            if !visited[v] {
                visited[v] = true;
                order.push(v);
                queue.push_back(v);
                if order.len() == target {
                    break 'outer;
                }
            }
        }
    }
    if restarts > 0 {
        warn!("BFS truncation restarted {restarts} time(s): input is disconnected");
    }
    Truncation {
        graph: g.induced_subgraph(&order),
        original_ids: order,
        restarts,
    }
}

/// Unweighted planted-partition graph with `blocks` contiguous equal blocks.
///
/// Each intra-block pair is joined with probability `p_in`, each inter-block
/// pair with `p_out`. Nodes left isolated are attached to one uniformly
/// chosen member of their own block.
pub fn planted_partition(
    n: usize,
    blocks: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<WeightedGraph, GraphError> {
    if blocks == 0 || n % blocks != 0 {
        return Err(GraphError::InvalidParameter(format!(
            "n = {n} must be divisible by blocks = {blocks}"
        )));
    }
    let block_size = n / blocks;
    if block_size < 2 {
        return Err(GraphError::InvalidParameter(
            "blocks must hold at least two nodes".into(),
        ));
    }
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return Err(GraphError::InvalidParameter(format!(
            "need 0 <= p_out < p_in <= 1, got p_in = {p_in}, p_out = {p_out}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut has_edge = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / block_size == j / block_size { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
                has_edge[i] = true;
                has_edge[j] = true;
            }
        }
    }
    for i in 0..n {
        if has_edge[i] {
            continue;
        }
        let base = (i / block_size) * block_size;
        let mut j = base + rng.gen_range(0..block_size - 1);
        if j >= i {
            j += 1;
        }
        edges.push((i, j, 1.0));
        has_edge[i] = true;
        has_edge[j] = true;
    }
    WeightedGraph::from_edges(n, edges)
}

/// Block label of each node in a [`planted_partition`] graph.
pub fn planted_labels(n: usize, blocks: usize) -> Vec<usize> {
    let size = n / blocks.max(1);
    (0..n).map(|u| u / size.max(1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const P4: &str = "4 3\n2\n1 3\n2 4\n3\n";

    #[test]
    fn metis_path_graph() {
        let g = parse_metis(P4).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.weighted_degrees(), &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(g.volumes(), &[1.0; 4]);
        assert_eq!(g.total_edge_weight(), 3.0);
        g.validate().unwrap();
    }

    #[test]
    fn edgelist_two_edge_path() {
        let g = parse_edgelist("0 1 2.5\n1 2 1.0").unwrap();
        assert_eq!(g.total_edge_weight(), 3.5);
        assert_eq!(g.weighted_degrees(), &[2.5, 3.5, 1.0]);
    }

    #[test]
    fn metis_weighted_formats_and_comments() {
        let text = "% comment\n3 2 11\n2 2 5\n1 1 5 3 1.5\n% mid\n4 2 1.5\n";
        let g = parse_metis(text).unwrap();
        assert_eq!(g.volumes(), &[2.0, 1.0, 4.0]);
        assert_eq!(g.edge_weight(0, 1), Some(5.0));
        assert_eq!(g.edge_weight(2, 1), Some(1.5));
        assert_eq!(g.total_edge_weight(), 6.5);
    }

    #[test]
    fn metis_isolated_node_is_empty_line() {
        let g = parse_metis("3 1\n2\n1\n\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn metis_errors_carry_line_numbers() {
        match parse_metis("4 x\n") {
            Err(GraphError::MalformedHeader { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("% c\n3 2\n2\n1 3\n1\n") {
            Err(GraphError::Asymmetric { line: 4, u: 1, v: 2 }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("2 1\n3\n1\n") {
            Err(GraphError::NodeOutOfRange { line: 2, id: 3, n: 2 }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("2 1 1\n2 0\n1 0\n") {
            Err(GraphError::NonPositiveWeight { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("2 1 1\n2 1\n1 2\n") {
            Err(GraphError::Asymmetric { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("3 5\n2\n1\n\n") {
            Err(GraphError::EdgeCountMismatch { declared: 5, found: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_metis("3 1\n2\n1\n") {
            Err(GraphError::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_edgelist("0 1\n1 2 -1\n") {
            Err(GraphError::NonPositiveWeight { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_edgelist("0 1\n1\n") {
            Err(GraphError::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn self_loops_dropped_and_duplicates_summed() {
        let g = parse_edgelist("0 0 4\n0 1 1\n1 0 2\n1 2\n").unwrap();
        assert_eq!(g.edge_weight(0, 1), Some(3.0));
        assert_eq!(g.edge_weight(1, 0), Some(3.0));
        assert_eq!(g.total_edge_weight(), 4.0);
        g.validate().unwrap();
        let h = parse_metis("2 1\n1 2\n1\n").unwrap();
        assert_eq!(h.num_edges(), 1);
        assert_eq!(h.total_edge_weight(), 1.0);
    }

    #[test]
    fn bfs_truncation_of_path() {
        let g = parse_metis(P4).unwrap();
        let t = bfs_truncate(&g, 3);
        assert_eq!(t.original_ids, vec![1, 0, 2]);
        assert_eq!(t.graph.n(), 3);
        assert_eq!(t.graph.num_edges(), 2);
        assert_eq!(t.restarts, 0);
        t.graph.validate().unwrap();
    }

    #[test]
    fn bfs_truncation_identity_and_clamp() {
        let g = planted_partition(40, 2, 0.5, 0.05, 3).unwrap();
        let t = bfs_truncate(&g, 40);
        assert_eq!(t.graph.n(), 40);
        assert_eq!(t.graph.num_edges(), g.num_edges());
        assert_eq!(t.graph.total_edge_weight(), g.total_edge_weight());
        assert_eq!(bfs_truncate(&g, 100).graph.n(), 40);
    }

    #[test]
    fn bfs_truncation_restarts_on_disconnected_input() {
        // two components: {0,1} and {2,3,4}
        let g = WeightedGraph::from_edges(5, [(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0)]).unwrap();
        // degrees sorted [1,1,1,1,2] -> median 1 -> node 0
        let t = bfs_truncate(&g, 4);
        assert_eq!(t.original_ids, vec![0, 1, 2, 3]);
        assert_eq!(t.restarts, 1);
        assert_eq!(t.graph.num_edges(), 2);
    }

    #[test]
    fn planted_extremes_give_disjoint_cliques() {
        let g = planted_partition(8, 2, 1.0, 0.0, 42).unwrap();
        assert_eq!(g.num_edges(), 12);
        for (u, v, _) in g.edges() {
            assert_eq!(u / 4, v / 4);
        }
    }

    #[test]
    fn planted_is_deterministic_per_seed() {
        let a = planted_partition(200, 2, 0.1, 0.01, 7).unwrap();
        let b = planted_partition(200, 2, 0.1, 0.01, 7).unwrap();
        let c = planted_partition(200, 2, 0.1, 0.01, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn planted_edge_count_near_analytic_mean() {
        // intra pairs: 2 * C(500, 2) = 249500 at 0.03; inter pairs 250000 at 0.002
        let expected = 249_500.0 * 0.03 + 250_000.0 * 0.002;
        for seed in 0..3 {
            let g = planted_partition(1000, 2, 0.03, 0.002, seed).unwrap();
            let m = g.num_edges() as f64;
            assert!((m - expected).abs() <= 0.1 * expected, "m = {m}");
            assert!((0..g.n()).all(|u| g.degree(u) > 0));
        }
    }

    #[test]
    fn planted_rejects_bad_parameters() {
        assert!(planted_partition(9, 2, 0.5, 0.1, 0).is_err());
        assert!(planted_partition(8, 2, 0.1, 0.5, 0).is_err());
        assert!(planted_partition(8, 2, 1.5, 0.5, 0).is_err());
        assert!(planted_partition(4, 4, 0.5, 0.1, 0).is_err());
    }

    #[test]
    fn metis_writer_round_trip() {
        let g = parse_metis("3 2 11\n2 2 5\n1 1 5 3 1.5\n4 2 1.5\n").unwrap();
        assert_eq!(parse_metis(&to_metis(&g)).unwrap(), g);
        let p = parse_metis(P4).unwrap();
        assert_eq!(to_metis(&p), P4);
    }
}
