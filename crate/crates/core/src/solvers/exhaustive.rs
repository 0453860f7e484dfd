use super::{spin_of_bit, SolveResult, SolveResult as R, SolverError, SubproblemSolver};
use crate::subqubo::SubQubo;

/// Largest subproblem enumerated unless configured otherwise.
pub const DEFAULT_MAX_VARS: usize = 26;

/// Variables handled by the precomputed inner table.
const TABLE_BITS: usize = 12;

#[derive(Clone, Debug)]
pub struct Exhaustive {
    pub max_vars: usize,
}

impl Default for Exhaustive {
    fn default() -> Self {
        Self {
            max_vars: DEFAULT_MAX_VARS,
        }
    }
}

impl SubproblemSolver for Exhaustive {
    fn id(&self) -> &'static str {
        "exhaustive"
    }

    fn is_stochastic(&self) -> bool {
        false
    }

    fn solve(&self, q: &SubQubo, _seed: u64) -> Result<SolveResult, SolverError> {
        solve_exhaustive(q, self.max_vars)
    }
}

#[inline]
fn gray(t: u64) -> u64 {
    t ^ (t >> 1)
}

/// Global minimum over all `2^k` spin vectors.
///
/// Configurations are visited in reflected Gray-code order starting from all
/// `-1`; among equal energies the first one visited wins. The low
/// `p = min(k, 12)` variables are enumerated against a table of their mutual
/// coupling energies, so each configuration costs `O(1)`; the field that the
/// high variables exert on them is rebuilt once per high configuration.
pub fn solve_exhaustive(q: &SubQubo, max_vars: usize) -> Result<SolveResult, SolverError> {
    let k = q.k();
    let cap = max_vars.min(63);
    if k > cap {
        return Err(SolverError::TooLarge { k, cap });
    }
    if k == 0 {
        return Ok(R::evaluated(q, Vec::new(), 1, true));
    }
    let p = k.min(TABLE_BITS);
    let high = k - p;

    // Coupling energy among the low variables, for every low bit pattern.
    let mut low_table = vec![0.0; 1 << p];
    for (cfg, slot) in low_table.iter_mut().enumerate() {
        let mut e = 0.0;
        for a in 0..p {
            let sa = f64::from(spin_of_bit(cfg as u64, a));
            let row = q.row(a);
            for b in a + 1..p {
                e += 2.0 * row[b] * sa * f64::from(spin_of_bit(cfg as u64, b));
            }
        }
        *slot = e;
    }

    let linear = q.linear();
    let mut field = vec![0.0; p];
    let mut best = f64::INFINITY;
    let mut best_bits = 0u64;
    for h in 0..1u64 << high {
        let hbits = gray(h);
        let hspin = |b: usize| f64::from(spin_of_bit(hbits, b - p));
        // Energy of the high variables alone, and their field on the low ones.
        let mut base = q.constant();
        for a in p..k {
            let sa = hspin(a);
            base += linear[a] * sa;
            let row = q.row(a);
            for b in a + 1..k {
                base += 2.0 * row[b] * sa * hspin(b);
            }
        }
        for (a, f) in field.iter_mut().enumerate() {
            let row = q.row(a);
            *f = linear[a] + (p..k).map(|b| 2.0 * row[b] * hspin(b)).sum::<f64>();
        }
        // Low part of gray(h * 2^p + j) is gray(j) with its top bit toggled for odd h.
        let mut cfg = (h & 1) << (p - 1);
        let mut lin: f64 = (0..p)
            .map(|a| field[a] * f64::from(spin_of_bit(cfg, a)))
            .sum();
        let mut consider = |cfg: u64, lin: f64| {
            let e = base + low_table[cfg as usize] + lin;
            if e < best {
                best = e;
                best_bits = hbits << p | cfg;
            }
        };
        consider(cfg, lin);
        for j in 1..1u64 << p {
            let a = j.trailing_zeros() as usize;
            lin -= 2.0 * field[a] * f64::from(spin_of_bit(cfg, a));
            cfg ^= 1 << a;
            consider(cfg, lin);
        }
    }
    let spins = (0..k).map(|b| spin_of_bit(best_bits, b)).collect();
    Ok(R::evaluated(q, spins, 1usize << k, true))
}
