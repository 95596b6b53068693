//! Policies induced by cut approximations, and forward simulation under them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::model::{SamplePath, SocProblem};
use crate::polyhedral::{solve_stage, FutureCost, PiecewiseAffineVF, StageError, StageOptions};
use crate::risk::{RiskMeasure, Theta};

/// A control decision at one tree node together with what each realization
/// of the stage would produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub u: Vec<f64>,
    pub theta: Theta,
    pub stage_costs: Vec<f64>,
    pub post_states: Vec<Vec<f64>>,
}

/// A non-anticipative policy: the decision depends on the stage and state only.
pub trait Policy: Sync {
    fn decide(&self, t: usize, x: &[f64]) -> Result<Decision, StageError>;
}

/// `û_t(x) ∈ argmin R(c_t(x, u, ξ) + V̲_{t+1}(x⁺))`, with `θ̂` re-minimized over
/// the full stage distribution at the chosen control.
#[derive(Debug, Clone)]
pub struct ValueFunctionPolicy<'a> {
    pub problem: &'a SocProblem,
    pub vfs: &'a [PiecewiseAffineVF],
    pub measure: &'a RiskMeasure,
    pub options: StageOptions,
}

impl<'a> ValueFunctionPolicy<'a> {
    pub fn new(problem: &'a SocProblem, vfs: &'a [PiecewiseAffineVF], measure: &'a RiskMeasure) -> Self {
        Self {
            problem,
            vfs,
            measure,
            options: StageOptions::default(),
        }
    }

    pub fn future(&self, t: usize) -> FutureCost<'a> {
        if t + 1 == self.problem.num_stages() {
            FutureCost::Terminal
        } else {
            FutureCost::Cuts(&self.vfs[t + 1])
        }
    }
}

impl Policy for ValueFunctionPolicy<'_> {
    fn decide(&self, t: usize, x: &[f64]) -> Result<Decision, StageError> {
        let s = solve_stage(self.problem, t, x, self.future(t), self.measure, &self.options)?;
        Ok(Decision {
            u: s.u,
            theta: s.theta,
            stage_costs: s.stage_costs,
            post_states: s.post_states,
        })
    }
}

/// One simulated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub path: Vec<usize>,
    /// `x̂_0, …, x̂_T`
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub thetas: Vec<Theta>,
    /// Realized stage costs `ĉ_0, …, ĉ_{T-1}` followed by the terminal cost.
    pub costs: Vec<f64>,
    /// Recursion values `𝔳_0, …, 𝔳_T`; empty until computed.
    pub values: Vec<f64>,
}

/// Decisions memoized by scenario prefix; valid for one fixed policy.
#[derive(Debug, Default)]
pub struct DecisionCache {
    map: Mutex<HashMap<Vec<usize>, Arc<Decision>>>,
    capacity: usize,
}

impl DecisionCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            map: Mutex::new(HashMap::new()),
            capacity,
        }
    }

    fn get_or_compute(
        &self,
        prefix: &[usize],
        f: impl FnOnce() -> Result<Decision, StageError>,
    ) -> Result<Arc<Decision>, StageError> {
        if let Some(d) = self.map.lock().expect("cache lock").get(prefix) {
            return Ok(d.clone());
        }
        let d = Arc::new(f()?);
        let mut map = self.map.lock().expect("cache lock");
        if map.len() < self.capacity {
            map.entry(prefix.to_vec()).or_insert_with(|| d.clone());
        }
        Ok(d)
    }
}

/// Follows `policy` along `path` from the initial state.
pub fn simulate(
    problem: &SocProblem,
    policy: &dyn Policy,
    path: &SamplePath,
    cache: Option<&DecisionCache>,
) -> Result<TrajectoryRecord, StageError> {
    let t_count = problem.num_stages();
    let mut states = Vec::with_capacity(t_count + 1);
    let mut controls = Vec::with_capacity(t_count);
    let mut thetas = Vec::with_capacity(t_count);
    let mut costs = Vec::with_capacity(t_count + 1);
    states.push(problem.initial_state.clone());
    for t in 0..t_count {
        let x = &states[t];
        let d = match cache {
            Some(c) => c.get_or_compute(&path.indices[..t], || policy.decide(t, x))?,
            None => Arc::new(policy.decide(t, x)?),
        };
        let j = path.indices[t];
        costs.push(d.stage_costs[j]);
        let next = d.post_states[j].clone();
        controls.push(d.u.clone());
        thetas.push(d.theta.clone());
        states.push(next);
    }
    costs.push(problem.terminal_value(&states[t_count]));
    Ok(TrajectoryRecord {
        path: path.indices.clone(),
        states,
        controls,
        thetas,
        costs,
        values: Vec::new(),
    })
}
