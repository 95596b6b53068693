//! Statistical upper bound on the optimal value of the nested problem.
//!
//! Along a simulated path, `𝔳_T = c_T(x̂_T)` and
//! `𝔳_t = Ψ(ĉ_t + 𝔳_{t+1}, θ̂_t)`; the expectation of `𝔳_0` dominates the value
//! of the policy, which dominates the optimal value.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{derive_seed, sample_path, SocProblem};
use crate::policy::{simulate, DecisionCache, Policy, TrajectoryRecord};
use crate::polyhedral::StageError;
use crate::risk::{RiskError, RiskMeasure};

/// Default limit on the number of scenario paths for exact enumeration.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("enumeration needs {needed} scenario paths, budget is {budget}")]
    Budget { needed: u128, budget: u128 },
    #[error("invalid evaluation setting: {0}")]
    Config(String),
}

/// `z_{1−β}` of the standard normal.
pub fn z_from_beta(beta: f64) -> Result<f64, BoundError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(BoundError::Config(format!("beta {beta} outside (0, 1)")));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - beta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub z: f64,
    pub seed: u64,
    pub threads: usize,
    /// Maximum number of memoized tree-node decisions (0 disables memoization).
    pub cache_capacity: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: 10,
            z: 2.0,
            seed: 0,
            threads: 1,
            cache_capacity: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    /// `𝔳_0` per path, in path order.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (divisor `S − 1`; zero when `S = 1`).
    pub std: f64,
    pub z: f64,
    /// `mean + z·std/√S`
    pub bound: f64,
    /// True when the mean is an exact probability-weighted enumeration.
    pub exact: bool,
}

impl EvaluationResult {
    pub fn from_samples(samples: Vec<f64>, z: f64) -> Self {
        let s = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / s;
        let std = if mean == f64::INFINITY {
            // The spread is undefined but the bound is +∞ either way.
            f64::INFINITY
        } else if samples.len() > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            bound: if mean == f64::INFINITY { mean } else { mean + z * std / s.sqrt() },
            samples,
            mean,
            std,
            z,
            exact: false,
        }
    }
}

/// Fills `traj.values` backward and returns `𝔳_0`.
pub fn path_recursion(measure: &RiskMeasure, traj: &mut TrajectoryRecord) -> Result<f64, RiskError> {
    let t_count = traj.thetas.len();
    let mut values = vec![0.0; t_count + 1];
    values[t_count] = traj.costs[t_count];
    for t in (0..t_count).rev() {
        values[t] = measure.psi(traj.costs[t] + values[t + 1], &traj.thetas[t])?;
    }
    traj.values = values;
    Ok(traj.values[0])
}

/// Seed of evaluation path `s` under base seed `seed`.
pub fn path_seed(seed: u64, s: usize) -> u64 {
    derive_seed(seed, s as u64)
}

/// Runs `S` independent simulations and aggregates `𝔳_0`.
///
/// Path `s` uses `path_seed(opts.seed, s)`, so results do not depend on the
/// number of threads.
pub fn evaluate_policy(
    problem: &SocProblem,
    policy: &dyn Policy,
    measure: &RiskMeasure,
    opts: &EvalOptions,
) -> Result<EvaluationResult, BoundError> {
    if opts.samples == 0 {
        return Err(BoundError::Config("need at least one sample path".into()));
    }
    let cache = (opts.cache_capacity > 0).then(|| DecisionCache::new(opts.cache_capacity));
    let one = |s: usize| -> Result<f64, BoundError> {
        let path = sample_path(problem, path_seed(opts.seed, s));
        let mut traj = simulate(problem, policy, &path, cache.as_ref())?;
        Ok(path_recursion(measure, &mut traj)?)
    };
    let samples: Vec<f64> = if opts.threads <= 1 {
        (0..opts.samples).map(one).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| BoundError::Config(e.to_string()))?;
        pool.install(|| (0..opts.samples).into_par_iter().map(one).collect::<Result<_, _>>())?
    };
    Ok(EvaluationResult::from_samples(samples, opts.z))
}

/// `E[𝔳_0]` by enumerating every scenario path with its probability.
pub fn enumerate_expected_v1(
    problem: &SocProblem,
    policy: &dyn Policy,
    measure: &RiskMeasure,
    budget: u128,
) -> Result<f64, BoundError> {
    let needed = problem.scenario_count();
    if needed > budget {
        return Err(BoundError::Budget { needed, budget });
    }
    let leaves = subtree(problem, policy, measure, 0, &problem.initial_state)?;
    Ok(leaves.iter().map(|(p, v)| p * v).sum())
}

/// `(probability, 𝔳_t)` for every path of the subtree rooted at `(t, x)`.
fn subtree(
    problem: &SocProblem,
    policy: &dyn Policy,
    measure: &RiskMeasure,
    t: usize,
    x: &[f64],
) -> Result<Vec<(f64, f64)>, BoundError> {
    if t == problem.num_stages() {
        return Ok(vec![(1.0, problem.terminal_value(x))]);
    }
    let d = policy.decide(t, x)?;
    let mut out = Vec::new();
    for (j, real) in problem.stage(t).realizations.iter().enumerate() {
        for (p, v) in subtree(problem, policy, measure, t + 1, &d.post_states[j])? {
            out.push((real.prob * p, measure.psi(d.stage_costs[j] + v, &d.theta)?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::Theta;

    #[test]
    fn sample_statistics() {
        let r = EvaluationResult::from_samples(vec![1.0, 3.0], 2.0);
        assert_eq!(r.mean, 2.0);
        assert!((r.std - 2f64.sqrt()).abs() < 1e-15);
        assert!((r.bound - 4.0).abs() < 1e-12);
        let c = EvaluationResult::from_samples(vec![5.0, 5.0], 2.0);
        assert_eq!((c.std, c.bound), (0.0, 5.0));
    }

    #[test]
    fn beta_to_z() {
        assert!((z_from_beta(0.025).unwrap() - 1.959964).abs() < 1e-5);
        assert!(z_from_beta(1.5).is_err());
    }

    #[test]
    fn recursion_collapses_for_expectation() {
        let mut traj = TrajectoryRecord {
            path: vec![0, 0],
            states: vec![vec![0.0]; 3],
            controls: vec![vec![0.0]; 2],
            thetas: vec![Theta::Empty; 2],
            costs: vec![1.0, 2.5, 4.0],
            values: Vec::new(),
        };
        assert_eq!(path_recursion(&RiskMeasure::Expectation, &mut traj).unwrap(), 7.5);
        assert_eq!(traj.values, vec![7.5, 6.5, 4.0]);
    }

    #[test]
    fn recursion_avar_one_stage() {
        let m = RiskMeasure::mean_avar(vec![0.0, 1.0], vec![0.5]).unwrap();
        let mut traj = TrajectoryRecord {
            path: vec![1],
            states: vec![vec![0.0]; 2],
            controls: vec![vec![0.0]],
            thetas: vec![Theta::Levels(vec![2.0])],
            costs: vec![1.5, 2.0],
            values: Vec::new(),
        };
        // θ + α⁻¹[ĉ₀ + ĉ₁ − θ]₊ = 2 + 2·1.5
        assert_eq!(path_recursion(&m, &mut traj).unwrap(), 5.0);
    }
}
