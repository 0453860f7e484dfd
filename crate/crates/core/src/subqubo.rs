//! Free-variable selection and the k-variable subproblem induced by holding
//! every other spin fixed.
//!
//! With free spins `s_v` and fixed spins `s_f`, the full objective splits as
//! `s_v^T M_vv s_v + s_v^T (2 M_vf s_f) + const`. For `M = alpha v v^T - beta A`
//! the linear field only needs the fixed volume on each side and each free
//! node's edge weight into each fixed side, so neither the n x n matrix nor
//! `v v^T` is ever formed.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::WeightedGraph;
use crate::objective::{evaluate, PartitionState, ProblemSpec};

#[derive(Debug, thiserror::Error)]
pub enum SubQuboError {
    #[error("free node {node} out of range (n = {n})")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("free node {0} listed twice")]
    DuplicateFree(usize),
    #[error("quantization needs at least 2 levels, got {0}")]
    Levels(u32),
    #[error("separate scaling needs the penalty/adjacency split of a freshly built subproblem")]
    NoSplit,
    #[error("malformed subproblem: {0}")]
    Malformed(String),
}

/// Penalty (`alpha v v^T`) and adjacency (`-beta A`) contributions, kept
/// apart for precision scaling.
#[derive(Clone, Debug, PartialEq)]
struct Split {
    penalty_quadratic: Vec<f64>,
    penalty_linear: Vec<f64>,
    coupling_quadratic: Vec<f64>,
    coupling_linear: Vec<f64>,
}

/// Energy `constant + linear . s + sum_{a != b} Q_ab s_a s_b` over spins
/// `s in {-1, +1}^k` (each unordered pair counted twice), to be minimized.
#[derive(Clone, Debug, PartialEq)]
pub struct SubQubo {
    ids: Vec<usize>,
    quadratic: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
    split: Option<Split>,
}

impl SubQubo {
    /// Builds from a dense row-major `k x k` matrix. The diagonal must be zero
    /// and the matrix symmetric.
    pub fn new(
        ids: Vec<usize>,
        quadratic: Vec<f64>,
        linear: Vec<f64>,
        constant: f64,
    ) -> Result<Self, SubQuboError> {
        let k = linear.len();
        if ids.len() != k || quadratic.len() != k * k {
            return Err(SubQuboError::Malformed(format!(
                "{} ids, {} linear terms, {} matrix entries",
                ids.len(),
                k,
                quadratic.len()
            )));
        }
        for a in 0..k {
            if quadratic[a * k + a] != 0.0 {
                return Err(SubQuboError::Malformed(format!("nonzero diagonal at {a}")));
            }
            for b in a + 1..k {
                if quadratic[a * k + b] != quadratic[b * k + a] {
                    return Err(SubQuboError::Malformed(format!("asymmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self {
            ids,
            quadratic,
            linear,
            constant,
            split: None,
        })
    }

    pub fn k(&self) -> usize {
        self.linear.len()
    }

    /// Full-graph node id of each variable.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn quadratic(&self, a: usize, b: usize) -> f64 {
        self.quadratic[a * self.k() + b]
    }

    /// Row `a` of the coupling matrix.
    pub fn row(&self, a: usize) -> &[f64] {
        let k = self.k();
        &self.quadratic[a * k..(a + 1) * k]
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// Largest absolute quadratic or linear coefficient.
    pub fn max_abs_coefficient(&self) -> f64 {
        max_abs(&self.quadratic).max(max_abs(&self.linear))
    }

    /// Smallest nonzero absolute quadratic or linear coefficient.
    pub fn min_nonzero_coefficient(&self) -> Option<f64> {
        self.quadratic
            .iter()
            .chain(&self.linear)
            .map(|x| x.abs())
            .filter(|&x| x > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Energy at `spins`, `O(k^2)`.
    pub fn energy(&self, spins: &[i8]) -> f64 {
        let k = self.k();
        debug_assert_eq!(spins.len(), k);
        let mut e = self.constant;
        for a in 0..k {
            let sa = f64::from(spins[a]);
            let row = self.row(a);
            let coupled: f64 = (0..k).map(|b| row[b] * f64::from(spins[b])).sum();
            e += sa * (self.linear[a] + coupled);
        }
        e
    }

    /// Wire form for external solvers.
    pub fn to_wire(&self) -> WireQubo {
        let k = self.k();
        let mut quadratic = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let q = self.quadratic(a, b);
                if q != 0.0 {
                    quadratic.push((a, b, 2.0 * q));
                }
            }
        }
        WireQubo {
            n: k,
            linear: self.linear.clone(),
            quadratic,
            offset: self.constant,
            sense: "min".into(),
            vars: "spin".into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_wire()).expect("subproblem serializes")
    }

    /// Rebuilds from wire form; variable ids become `0..n`.
    pub fn from_wire(wire: &WireQubo) -> Result<Self, SubQuboError> {
        let k = wire.n;
        if wire.linear.len() != k {
            return Err(SubQuboError::Malformed(format!(
                "n = {k} but {} linear terms",
                wire.linear.len()
            )));
        }
        if wire.sense != "min" || wire.vars != "spin" {
            return Err(SubQuboError::Malformed(format!(
                "unsupported sense {:?} / vars {:?}",
                wire.sense, wire.vars
            )));
        }
        let mut quadratic = vec![0.0; k * k];
        for &(i, j, w) in &wire.quadratic {
            if i >= k || j >= k || i == j {
                return Err(SubQuboError::Malformed(format!("bad coupling ({i}, {j})")));
            }
            quadratic[i * k + j] += w / 2.0;
            quadratic[j * k + i] += w / 2.0;
        }
        Self::new((0..k).collect(), quadratic, wire.linear.clone(), wire.offset)
    }
}

/// JSON exchanged with external solvers. The energy of a spin vector is
/// `offset + sum_i linear[i] s_i + sum_{(i, j, w)} w s_i s_j` with `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireQubo {
    pub n: usize,
    pub linear: Vec<f64>,
    pub quadratic: Vec<(usize, usize, f64)>,
    pub offset: f64,
    pub sense: String,
    pub vars: String,
}

fn max_abs(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// The `k` highest gains, ties to the lower id.
    #[default]
    Greedy,
    /// `k` nodes drawn uniformly from the `2k` highest gains.
    Stochastic,
}

/// Picks the free variables for the next subproblem, best gain first.
pub fn select_free<R: Rng + ?Sized>(
    gains: &[f64],
    k_sub: usize,
    selection: Selection,
    rng: &mut R,
) -> Vec<usize> {
    let n = gains.len();
    let by_gain = |a: &usize, b: &usize| gains[*b].total_cmp(&gains[*a]).then(a.cmp(b));
    let pool_size = match selection {
        Selection::Greedy => k_sub.min(n),
        Selection::Stochastic => (2 * k_sub).min(n),
    };
    let mut ids: Vec<usize> = (0..n).collect();
    if pool_size < n && pool_size > 0 {
        ids.select_nth_unstable_by(pool_size - 1, by_gain);
    }
    ids.truncate(pool_size);
    ids.sort_unstable_by(by_gain);
    if selection == Selection::Stochastic && pool_size > k_sub {
        let mut picked: Vec<usize> = sample(rng, pool_size, k_sub).into_vec();
        picked.sort_unstable();
        ids = picked.into_iter().map(|i| ids[i]).collect();
    }
    ids
}

/// Materializes the subproblem over `free`, all other spins held at their
/// values in `state`.
///
/// For free `a != b`: `Q_ab = alpha v_a v_b - beta A_ab`, and
/// `linear_a = 2 alpha v_a (Vf(C2) - Vf(C1)) - 2 beta (deg(a, F2) - deg(a, F1))`
/// where `Vf` and `F` refer to fixed nodes only. The constant makes the
/// energy at the current free spins equal to the full objective.
///
/// Runs in `O(k^2 + sum of free degrees)`.
pub fn build_subqubo(
    g: &WeightedGraph,
    spec: &ProblemSpec,
    state: &PartitionState,
    free: &[usize],
) -> Result<SubQubo, SubQuboError> {
    let n = g.n();
    let k = free.len();
    let mut slot = HashMap::with_capacity(k);
    for (a, &u) in free.iter().enumerate() {
        if u >= n {
            return Err(SubQuboError::NodeOutOfRange { node: u, n });
        }
        if slot.insert(u, a).is_some() {
            return Err(SubQuboError::DuplicateFree(u));
        }
    }
    let (alpha, beta) = (spec.alpha(), spec.beta());
    let vol: Vec<f64> = free.iter().map(|&u| g.volume(u)).collect();
    let mut fixed_vol = [state.vol_c1(), state.vol_c2()];
    for (a, &u) in free.iter().enumerate() {
        fixed_vol[(state.spin(u) > 0) as usize] -= vol[a];
    }

    let mut penalty_quadratic = vec![0.0; k * k];
    let mut coupling_quadratic = vec![0.0; k * k];
    let mut penalty_linear = vec![0.0; k];
    let mut coupling_linear = vec![0.0; k];
    let field = fixed_vol[1] - fixed_vol[0];
    for a in 0..k {
        for b in 0..k {
            if a != b {
                penalty_quadratic[a * k + b] = alpha * (vol[a] * vol[b]);
            }
        }
        let mut into_fixed = [0.0; 2];
        for (j, w) in g.adjacency(free[a]) {
            match slot.get(&j) {
                Some(&b) => coupling_quadratic[a * k + b] = -beta * w,
                None => into_fixed[(state.spin(j) > 0) as usize] += w,
            }
        }
        penalty_linear[a] = 2.0 * alpha * vol[a] * field;
        coupling_linear[a] = -2.0 * beta * (into_fixed[1] - into_fixed[0]);
    }
    let quadratic: Vec<f64> = penalty_quadratic
        .iter()
        .zip(&coupling_quadratic)
        .map(|(p, c)| p + c)
        .collect();
    let linear: Vec<f64> = penalty_linear
        .iter()
        .zip(&coupling_linear)
        .map(|(p, c)| p + c)
        .collect();
    let mut q = SubQubo {
        ids: free.to_vec(),
        quadratic,
        linear,
        constant: 0.0,
        split: Some(Split {
            penalty_quadratic,
            penalty_linear,
            coupling_quadratic,
            coupling_linear,
        }),
    };
    let current: Vec<i8> = free.iter().map(|&u| state.spin(u)).collect();
    q.constant = evaluate(spec, state).objective - q.energy(&current);
    Ok(q)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    #[default]
    None,
    /// Normalize penalty and adjacency parts independently, then recombine.
    Separate,
    /// One global max-abs normalization.
    Naive,
}

impl std::str::FromStr for PrecisionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "separate" => Ok(Self::Separate),
            "naive" => Ok(Self::Naive),
            other => Err(format!("unknown precision mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub mode: PrecisionMode,
    /// Round every coefficient to this many evenly spaced values in `[-1, 1]`.
    pub levels: Option<u32>,
    /// Weight of the normalized penalty part relative to the normalized
    /// adjacency part under separate scaling.
    pub penalty_ratio: f64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            mode: PrecisionMode::None,
            levels: None,
            penalty_ratio: 1.0,
        }
    }
}

fn scale_in_place(xs: &mut [f64], by: f64) {
    if by > 0.0 {
        xs.iter_mut().for_each(|x| *x /= by);
    }
}

fn quantize(x: f64, levels: u32) -> f64 {
    let steps = f64::from(levels - 1);
    let j = ((x.clamp(-1.0, 1.0) + 1.0) * steps / 2.0).round();
    -1.0 + 2.0 * j / steps
}

/// Rescales coefficients for a limited-precision solver. The constant is
/// carried unscaled; the result no longer carries the penalty/adjacency split.
pub fn scale_for_precision(q: &SubQubo, cfg: &PrecisionConfig) -> Result<SubQubo, SubQuboError> {
    if let Some(levels) = cfg.levels {
        if levels < 2 {
            return Err(SubQuboError::Levels(levels));
        }
    }
    let (mut quadratic, mut linear) = match cfg.mode {
        PrecisionMode::None => return Ok(q.clone()),
        PrecisionMode::Naive => {
            let mut quadratic = q.quadratic.clone();
            let mut linear = q.linear.clone();
            let s = q.max_abs_coefficient();
            scale_in_place(&mut quadratic, s);
            scale_in_place(&mut linear, s);
            (quadratic, linear)
        }
        PrecisionMode::Separate => {
            let split = q.split.as_ref().ok_or(SubQuboError::NoSplit)?;
            let mut pq = split.penalty_quadratic.clone();
            let mut pl = split.penalty_linear.clone();
            let mut cq = split.coupling_quadratic.clone();
            let mut cl = split.coupling_linear.clone();
            let ps = max_abs(&pq).max(max_abs(&pl));
            scale_in_place(&mut pq, ps);
            scale_in_place(&mut pl, ps);
            let cs = max_abs(&cq).max(max_abs(&cl));
            scale_in_place(&mut cq, cs);
            scale_in_place(&mut cl, cs);
            let r = cfg.penalty_ratio;
            let quadratic = pq.iter().zip(&cq).map(|(p, c)| r * p + c).collect();
            let linear = pl.iter().zip(&cl).map(|(p, c)| r * p + c).collect();
            (quadratic, linear)
        }
    };
    if let Some(levels) = cfg.levels {
        let s = max_abs(&quadratic).max(max_abs(&linear));
        scale_in_place(&mut quadratic, s);
        scale_in_place(&mut linear, s);
        quadratic.iter_mut().for_each(|x| *x = quantize(*x, levels));
        linear.iter_mut().for_each(|x| *x = quantize(*x, levels));
    }
    Ok(SubQubo {
        ids: q.ids.clone(),
        quadratic,
        linear,
        constant: q.constant,
        split: None,
    })
}
