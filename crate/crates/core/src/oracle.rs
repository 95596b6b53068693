//! Exact answers for small scenario trees.
//!
//! The nested problem is written in extensive form: one control per tree node,
//! one risk epigraph variable `W_n ≥ R_n(c + W_child)` per node, and the root
//! epigraph minimized. Monotonicity of the risk measures makes the epigraph
//! relaxation exact, and per-node `θ` variables carry the inner minimization.

use thiserror::Error;

use crate::lp::LpError;
use crate::model::{AffinePiece, SocProblem};
use crate::policy::Policy;
use crate::polyhedral::{add_max_term, add_mean_epigraph, add_tangent, risk_expr, Affine, ParamLp, StageError};
use crate::risk::{RiskError, RiskMeasure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("scenario tree has {needed} nodes, budget is {budget}")]
    Budget { needed: u128, budget: u128 },
    #[error("extensive form: {0}")]
    Lp(#[from] LpError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    /// Maximum number of decision nodes.
    pub budget: u128,
    /// Relative gap at which the KL outer approximation stops.
    pub rel_tol: f64,
    pub max_rounds: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            budget: 100_000,
            rel_tol: 1e-9,
            max_rounds: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Best known value: the LP optimum for polyhedral measures, the exact
    /// nested value of the best control plan for KL.
    pub value: f64,
    /// Certified lower bound on the optimum (equal to `value` for polyhedral measures).
    pub lower: f64,
    pub certified: bool,
    /// Optimal first-stage control.
    pub control: Vec<f64>,
    /// A subgradient of the value function at the root state.
    pub gradient: Vec<f64>,
    pub nodes: u128,
}

/// Number of decision nodes of the subtree rooted at stage `t`.
pub fn tree_nodes(problem: &SocProblem, t: usize) -> u128 {
    let mut total = 0u128;
    let mut width = 1u128;
    for s in t..problem.num_stages() {
        total = total.saturating_add(width);
        width = width.saturating_mul(problem.num_realizations(s) as u128);
    }
    total
}

struct Node {
    stage: usize,
    state: Vec<Affine>,
    u_vars: Vec<usize>,
    /// `c_j + W_child` (or the terminal cost) per realization.
    y: Vec<Affine>,
    w: usize,
    children: Vec<usize>,
}

struct Builder<'a> {
    problem: &'a SocProblem,
    measure: &'a RiskMeasure,
    n: usize,
    plp: ParamLp,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    /// `pᵀ(x, u) + c` with the state given as expressions.
    fn piece(&self, state: &[Affine], u_vars: &[usize], p: &AffinePiece) -> Affine {
        let mut e = Affine::zero(self.n);
        for (xi, a) in state.iter().zip(&p.x) {
            if *a != 0.0 {
                e.add(xi, *a);
            }
        }
        e.vars.extend(p.u.iter().zip(u_vars).filter(|(a, _)| **a != 0.0).map(|(a, v)| (*v, *a)));
        e.c += p.c;
        e
    }

    fn add_cost(&mut self, y: &mut Affine, state: &[Affine], u_vars: &[usize], cost: &crate::model::Cost) -> Result<(), LpError> {
        for term in cost.terms() {
            let pieces: Vec<Affine> = term.pieces.iter().map(|p| self.piece(state, u_vars, p)).collect();
            add_max_term(&mut self.plp, y, &pieces, self.n)?;
        }
        Ok(())
    }

    fn build(&mut self, t: usize, state: Vec<Affine>) -> Result<usize, LpError> {
        let problem = self.problem;
        let stage = problem.stage(t);
        let cs = &stage.control_set;
        let u_vars: Vec<usize> = (0..problem.control_dims[t])
            .map(|i| self.plp.add_var(0.0, cs.lower(i), cs.upper(i)))
            .collect();
        for row in &cs.rows {
            let e = self.piece(&state, &u_vars, &AffinePiece::new(row.x.clone(), row.u.clone(), -row.rhs));
            self.plp.add_le(&e)?;
        }
        let last = t + 1 == problem.num_stages();
        let mut y = Vec::with_capacity(stage.realizations.len());
        let mut children = Vec::new();
        for real in &stage.realizations {
            let mut yj = Affine::zero(self.n);
            self.add_cost(&mut yj, &state, &u_vars, &real.cost)?;
            let next: Vec<Affine> = (0..real.b.len())
                .map(|i| {
                    let p = AffinePiece::new(real.a[i].clone(), real.b_mat[i].clone(), real.b[i]);
                    self.piece(&state, &u_vars, &p)
                })
                .collect();
            if last {
                self.add_cost(&mut yj, &next, &[], &problem.terminal_cost)?;
            } else {
                let child = self.build(t + 1, next)?;
                yj.vars.push((self.nodes[child].w, 1.0));
                children.push(child);
            }
            y.push(yj);
        }
        let probs = stage.probs();
        let w = match risk_expr(&mut self.plp, self.measure, &y, &probs, self.n)? {
            Some(mut e) => {
                let w = self.plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                e.vars.push((w, -1.0));
                self.plp.add_le(&e)?;
                w
            }
            None => add_mean_epigraph(&mut self.plp, &y, &probs, self.n)?,
        };
        self.nodes.push(Node {
            stage: t,
            state,
            u_vars,
            y,
            w,
            children,
        });
        Ok(self.nodes.len() - 1)
    }

    /// Exact nested value of the control plan in `sol`, bottom-up from `id`.
    fn plan_value(&self, id: usize, sol: &[f64]) -> Result<f64, RiskError> {
        let node = &self.nodes[id];
        let xhat = &self.plp.xhat;
        let x: Vec<f64> = node.state.iter().map(|e| e.eval(sol, xhat)).collect();
        let u: Vec<f64> = node.u_vars.iter().map(|&k| sol[k]).collect();
        let stage = self.problem.stage(node.stage);
        let mut values = Vec::with_capacity(stage.realizations.len());
        for (j, real) in stage.realizations.iter().enumerate() {
            let next = match node.children.get(j) {
                Some(&c) => self.plan_value(c, sol)?,
                None => self.problem.terminal_value(&real.transition(&x, &u)),
            };
            values.push(real.cost.eval(&x, &u) + next);
        }
        self.measure.risk_eval_raw(&values, &stage.probs())
    }
}

/// Optimal value `V_t(x)` of the nested problem from stage `t` on.
pub fn exact_value(
    problem: &SocProblem,
    measure: &RiskMeasure,
    t: usize,
    x: &[f64],
    opts: &OracleOptions,
) -> Result<OracleSolution, OracleError> {
    let nodes = tree_nodes(problem, t);
    if nodes > opts.budget {
        return Err(OracleError::Budget {
            needed: nodes,
            budget: opts.budget,
        });
    }
    if x.len() != problem.state_dims[t] {
        return Err(StageError::Dimension {
            expected: problem.state_dims[t],
            found: x.len(),
        }
        .into());
    }
    let n = x.len();
    let mut b = Builder {
        problem,
        measure,
        n,
        plp: ParamLp::new(x),
        nodes: Vec::new(),
    };
    let root_state: Vec<Affine> = (0..n)
        .map(|i| {
            let mut e = Affine::zero(n);
            e.x[i] = 1.0;
            e
        })
        .collect();
    let root = b.build(t, root_state)?;
    b.plp.add_objective(&Affine::var(n, b.nodes[root].w, 1.0), 1.0);
    let lp_err = |e: LpError| match e {
        LpError::Infeasible => OracleError::Stage(StageError::Infeasible { stage: t, state: x.to_vec() }),
        LpError::Unbounded => OracleError::Stage(StageError::Unbounded { stage: t }),
        e => OracleError::Lp(e),
    };
    b.plp.solve().map_err(lp_err)?;

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut certified = true;
    if !measure.is_polyhedral() {
        let mut rounds = 0;
        loop {
            let sol = b.plp.solution().to_vec();
            let value = b.plan_value(root, &sol)?;
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, sol.clone()));
            }
            let upper = best.as_ref().unwrap().0;
            let lower = b.plp.value();
            if upper - lower <= opts.rel_tol * (1.0 + upper.abs()) {
                break;
            }
            if rounds >= opts.max_rounds {
                certified = false;
                break;
            }
            let mut added = 0;
            for k in 0..b.nodes.len() {
                let node = &b.nodes[k];
                let probs = problem.stage(node.stage).probs();
                let ybar: Vec<f64> = node.y.iter().map(|e| e.eval(&sol, &b.plp.xhat)).collect();
                let (r, _, q) = measure.risk_with_weights(&ybar, &probs)?;
                let w = node.w;
                if r - sol[w] > 1e-12 * (1.0 + r.abs()) {
                    let y = node.y.clone();
                    add_tangent(&mut b.plp, w, &y, &ybar, r, &q, n).map_err(lp_err)?;
                    added += 1;
                }
            }
            if added == 0 {
                break;
            }
            rounds += 1;
        }
    }
    let lower = b.plp.value();
    let (value, sol) = match best {
        Some((v, sol)) => (v, sol),
        None => (lower, b.plp.solution().to_vec()),
    };
    let control = b.nodes[root].u_vars.iter().map(|&k| sol[k]).collect();
    Ok(OracleSolution {
        value,
        lower: lower.min(value),
        certified,
        control,
        gradient: b.plp.value_gradient(),
        nodes,
    })
}

/// Optimal value of the nested problem at the initial state.
pub fn exact_optimal_value(
    problem: &SocProblem,
    measure: &RiskMeasure,
    opts: &OracleOptions,
) -> Result<OracleSolution, OracleError> {
    exact_value(problem, measure, 0, &problem.initial_state, opts)
}

/// Nested risk of the cost stream produced by `policy`, evaluated node by
/// node over the full scenario tree.
pub fn exact_policy_value(
    problem: &SocProblem,
    policy: &dyn Policy,
    measure: &RiskMeasure,
    budget: u128,
) -> Result<f64, OracleError> {
    let nodes = tree_nodes(problem, 0);
    if nodes > budget {
        return Err(OracleError::Budget { needed: nodes, budget });
    }
    policy_node_value(problem, policy, measure, 0, &problem.initial_state)
}

fn policy_node_value(
    problem: &SocProblem,
    policy: &dyn Policy,
    measure: &RiskMeasure,
    t: usize,
    x: &[f64],
) -> Result<f64, OracleError> {
    if t == problem.num_stages() {
        return Ok(problem.terminal_value(x));
    }
    let d = policy.decide(t, x)?;
    let mut values = Vec::with_capacity(d.post_states.len());
    for (j, post) in d.post_states.iter().enumerate() {
        values.push(d.stage_costs[j] + policy_node_value(problem, policy, measure, t + 1, post)?);
    }
    Ok(measure.risk_eval_raw(&values, &problem.stage(t).probs())?)
}
