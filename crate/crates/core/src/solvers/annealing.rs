use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SolveResult, SolverError, SubproblemSolver};
use crate::subqubo::SubQubo;

/// Simulated-annealing schedule. Temperatures left unset default to
/// `max|coef| * k` (hot) and `0.01 * min nonzero |coef|` (cold).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaParams {
    pub num_samples: usize,
    pub sweeps: usize,
    pub t_hot: Option<f64>,
    pub t_cold: Option<f64>,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            sweeps: 50,
            t_hot: None,
            t_cold: None,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.num_samples == 0 {
            return Err(SolverError::InvalidParams("num_samples must be at least 1".into()));
        }
        for (name, t) in [("t_hot", self.t_hot), ("t_cold", self.t_cold)] {
            if let Some(t) = t {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(SolverError::InvalidParams(format!("{name} = {t}")));
                }
            }
        }
        Ok(())
    }

    fn temperatures(&self, q: &SubQubo) -> Option<(f64, f64)> {
        let min_coef = q.min_nonzero_coefficient()?;
        let hot = self
            .t_hot
            .unwrap_or(q.max_abs_coefficient() * q.k() as f64);
        let cold = self.t_cold.unwrap_or(0.01 * min_coef);
        Some((hot, cold))
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimulatedAnnealing {
    pub params: SaParams,
}

impl SubproblemSolver for SimulatedAnnealing {
    fn id(&self) -> &'static str {
        "sa"
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn solve(&self, q: &SubQubo, seed: u64) -> Result<SolveResult, SolverError> {
        solve_sa(q, &self.params, seed)
    }
}

/// Best final state over `num_samples` independent Metropolis anneals with a
/// geometric schedule from `t_hot` to `t_cold`, one single-flip sweep per
/// temperature step.
pub fn solve_sa(q: &SubQubo, params: &SaParams, seed: u64) -> Result<SolveResult, SolverError> {
    params.validate()?;
    let k = q.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // all-zero coefficients: every state is optimal, skip the schedule
    let temps = params.temperatures(q);
    let schedule: Vec<f64> = match temps {
        Some((hot, cold)) if params.sweeps > 0 => {
            let steps = params.sweeps;
            (0..steps)
                .map(|t| {
                    if steps == 1 {
                        hot
                    } else {
                        hot * (cold / hot).powf(t as f64 / (steps - 1) as f64)
                    }
                })
                .collect()
        }
        _ => Vec::new(),
    };

    let linear = q.linear();
    let mut spins = vec![0i8; k];
    let mut field = vec![0.0; k];
    let mut best_spins = Vec::new();
    let mut best = f64::INFINITY;
    for _ in 0..params.num_samples {
        spins.iter_mut().for_each(|s| *s = if rng.gen() { 1 } else { -1 });
        for a in 0..k {
            let row = q.row(a);
            field[a] = linear[a]
                + 2.0 * (0..k).map(|b| row[b] * f64::from(spins[b])).sum::<f64>();
        }
        let mut energy = q.energy(&spins);
        for &t in &schedule {
            for a in 0..k {
                // flipping a changes the energy by -2 s_a h_a
                let delta = -2.0 * f64::from(spins[a]) * field[a];
                if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                    spins[a] = -spins[a];
                    energy += delta;
                    let step = 4.0 * f64::from(spins[a]);
                    let row = q.row(a);
                    for b in 0..k {
                        field[b] += step * row[b];
                    }
                }
            }
        }
        if energy < best {
            best = energy;
            best_spins.clone_from(&spins);
        }
    }
    Ok(SolveResult::evaluated(q, best_spins, params.num_samples, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_problem_returns_constant() {
        let q = SubQubo::new(vec![0, 1, 2], vec![0.0; 9], vec![0.0; 3], -2.5).unwrap();
        let r = solve_sa(&q, &SaParams::default(), 3).unwrap();
        assert_eq!(r.energy, -2.5);
        assert!(!r.proven_optimal);
    }

    #[test]
    fn no_sweeps_returns_initial_sample() {
        let q = SubQubo::new(vec![0, 1], vec![0.0, 1.0, 1.0, 0.0], vec![0.3, -0.7], 1.0).unwrap();
        let params = SaParams {
            num_samples: 1,
            sweeps: 0,
            ..SaParams::default()
        };
        let r = solve_sa(&q, &params, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init: Vec<i8> = (0..2).map(|_| if rng.gen() { 1 } else { -1 }).collect();
        assert_eq!(r.spins, init);
        assert_eq!(r.energy, q.energy(&init));
    }

    #[test]
    fn deterministic_per_seed_and_validated() {
        let q = SubQubo::new(vec![0, 1], vec![0.0, 1.0, 1.0, 0.0], vec![0.3, -0.7], 0.0).unwrap();
        let p = SaParams::default();
        assert_eq!(solve_sa(&q, &p, 5).unwrap(), solve_sa(&q, &p, 5).unwrap());
        let bad = SaParams {
            num_samples: 0,
            ..p
        };
        assert!(solve_sa(&q, &bad, 0).is_err());
    }
}
