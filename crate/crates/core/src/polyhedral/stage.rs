use serde::{Deserialize, Serialize};

use super::{Affine, Cut, ParamLp, PiecewiseAffineVF, StageError};
use crate::model::{AffinePiece, Realization, SocProblem};
use crate::risk::{RiskMeasure, Theta};

/// How the stage-value cut gradient is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutRule {
    /// Sensitivity of the stage LP value to the state, from the LP duals.
    /// Valid for state-dependent control sets and at kinks.
    #[default]
    Dual,
    /// `Σ pⱼ Ψ'(yⱼ, θ̂)(∇ₓcⱼ + Aⱼᵀ ∇V̲(x⁺ⱼ))` with lowest-index subgradients.
    /// Only for control sets that do not depend on the state; at kinks of the
    /// cost or the cut pool the result may overestimate the value function.
    ChainRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOptions {
    pub cut_rule: CutRule,
    /// Relative gap at which the KL outer approximation stops.
    pub kelley_rel_tol: f64,
    pub kelley_max_rounds: usize,
    /// Relative violation above which a future-cost cut is added to the LP.
    pub cut_tol: f64,
}

impl Default for StageOptions {
    fn default() -> Self {
        Self {
            cut_rule: CutRule::Dual,
            kelley_rel_tol: 1e-8,
            kelley_max_rounds: 50,
            cut_tol: 1e-9,
        }
    }
}

/// What follows the stage: a cut pool, or the exact terminal cost.
#[derive(Debug, Clone, Copy)]
pub enum FutureCost<'a> {
    Cuts(&'a PiecewiseAffineVF),
    Terminal,
}

impl FutureCost<'_> {
    pub fn eval(&self, problem: &SocProblem, x: &[f64]) -> f64 {
        match self {
            FutureCost::Cuts(vf) => vf.eval(x),
            FutureCost::Terminal => problem.terminal_value(x),
        }
    }

    pub fn subgrad(&self, problem: &SocProblem, x: &[f64]) -> Result<Vec<f64>, StageError> {
        match self {
            FutureCost::Cuts(vf) => vf.subgrad(x).map(|(g, _)| g),
            FutureCost::Terminal => Ok(problem.terminal_subgrad(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSolution {
    pub u: Vec<f64>,
    /// `argmin_θ` over the realized values `y`.
    pub theta: Theta,
    /// `R(y)` at the returned control.
    pub objective: f64,
    /// Optimal value of the final LP; a lower bound on the stage minimum
    /// (equal to it for polyhedral measures).
    pub lower_objective: f64,
    pub post_states: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    pub future_values: Vec<f64>,
    /// `yⱼ = cⱼ(x, u) + V̲(x⁺ⱼ)`
    pub values: Vec<f64>,
    pub cut_gradient: Vec<f64>,
    /// False when the KL outer loop stopped on its round budget.
    pub certified: bool,
}

impl StageSolution {
    /// `v + gᵀ(x − x̂)` for the stage value function.
    pub fn cut(&self, stage: usize, x: &[f64], rule: CutRule, born: usize) -> Cut {
        let value = match rule {
            CutRule::Dual => self.lower_objective,
            CutRule::ChainRule => self.objective,
        };
        Cut::at_point(stage, value, self.cut_gradient.clone(), x, born)
    }
}

pub(crate) fn piece_expr(p: &AffinePiece, u_vars: &[usize], n: usize) -> Affine {
    let mut e = Affine::zero(n);
    e.vars = p
        .u
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(i, a)| (u_vars[i], *a))
        .collect();
    e.x.copy_from_slice(&p.x);
    e.c = p.c;
    e
}

/// Components of `A x + B u + b` as expressions in `u` and `x`.
pub(crate) fn post_state_exprs(real: &Realization, u_vars: &[usize], n: usize) -> Vec<Affine> {
    (0..real.b.len())
        .map(|i| {
            let mut e = Affine::zero(n);
            e.vars = real.b_mat[i]
                .iter()
                .enumerate()
                .filter(|(_, a)| **a != 0.0)
                .map(|(k, a)| (u_vars[k], *a))
                .collect();
            e.x.copy_from_slice(&real.a[i]);
            e.c = real.b[i];
            e
        })
        .collect()
}

/// `Σᵢ aᵢ·post_i + c`
pub(crate) fn combine(post: &[Affine], a: &[f64], c: f64, n: usize) -> Affine {
    let mut e = Affine::zero(n);
    for (pi, ai) in post.iter().zip(a) {
        if *ai != 0.0 {
            e.add(pi, *ai);
        }
    }
    e.c += c;
    e
}

/// Adds `max_q piece_q` to `y`, inline for a single piece or through an epigraph variable.
pub(crate) fn add_max_term(
    plp: &mut ParamLp,
    y: &mut Affine,
    pieces: &[Affine],
    n: usize,
) -> Result<(), crate::lp::LpError> {
    if pieces.len() == 1 {
        y.add(&pieces[0], 1.0);
        return Ok(());
    }
    let e = plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    for p in pieces {
        let mut row = p.clone();
        row.vars.push((e, -1.0));
        plp.add_le(&row)?;
    }
    y.add(&Affine::var(n, e, 1.0), 1.0);
    Ok(())
}

/// Adds the auxiliary variables and rows of the linearized risk measure over
/// the expressions `y` and returns the expression whose minimum over the new
/// variables is `R(y)`. `None` for the non-polyhedral KL measure.
pub(crate) fn risk_expr(
    plp: &mut ParamLp,
    measure: &RiskMeasure,
    y: &[Affine],
    probs: &[f64],
    n: usize,
) -> Result<Option<Affine>, crate::lp::LpError> {
    let mut e = Affine::zero(n);
    match measure {
        RiskMeasure::Expectation => {
            for (yj, p) in y.iter().zip(probs) {
                e.add(yj, *p);
            }
        }
        RiskMeasure::MeanAvar(m) => {
            let l0 = m.expectation_weight();
            if l0 != 0.0 {
                for (yj, p) in y.iter().zip(probs) {
                    e.add(yj, l0 * p);
                }
            }
            for (w, a) in m.avar_terms() {
                if w == 0.0 {
                    continue;
                }
                let theta = plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                e.vars.push((theta, w));
                for (yj, p) in y.iter().zip(probs) {
                    let z = plp.add_var(0.0, 0.0, f64::INFINITY);
                    e.vars.push((z, w * p / a));
                    let mut row = yj.clone();
                    row.vars.push((theta, -1.0));
                    row.vars.push((z, -1.0));
                    plp.add_le(&row)?;
                }
            }
        }
        RiskMeasure::Oce(util) => {
            let theta = plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
            e.vars.push((theta, 1.0));
            let pieces = util.pieces();
            for (yj, p) in y.iter().zip(probs) {
                let w = plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                e.vars.push((w, *p));
                for &(s, d) in &pieces {
                    let mut row = yj.scaled(s);
                    row.vars.push((theta, -s));
                    row.vars.push((w, -1.0));
                    row.c -= d;
                    plp.add_le(&row)?;
                }
            }
        }
        RiskMeasure::Kl(_) => return Ok(None),
    }
    Ok(Some(e))
}

/// Adds the linearized risk measure over the expressions `y` to the
/// objective. Returns the KL epigraph variable, if any.
pub(crate) fn add_risk_objective(
    plp: &mut ParamLp,
    measure: &RiskMeasure,
    y: &[Affine],
    probs: &[f64],
    n: usize,
) -> Result<Option<usize>, crate::lp::LpError> {
    if let Some(e) = risk_expr(plp, measure, y, probs, n)? {
        plp.add_objective(&e, 1.0);
        return Ok(None);
    }
    let w = add_mean_epigraph(plp, y, probs, n)?;
    plp.add_objective(&Affine::var(n, w, 1.0), 1.0);
    Ok(Some(w))
}

/// A free variable `w` with `w ≥ E[y]`, the first outer approximation of a
/// risk measure that dominates the expectation.
pub(crate) fn add_mean_epigraph(
    plp: &mut ParamLp,
    y: &[Affine],
    probs: &[f64],
    n: usize,
) -> Result<usize, crate::lp::LpError> {
    let w = plp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    let mut row = Affine::var(n, w, -1.0);
    for (yj, p) in y.iter().zip(probs) {
        row.add(yj, *p);
    }
    plp.add_le(&row)?;
    Ok(w)
}

/// Adds the tangent `w ≥ R(ȳ) + qᵀ(y − ȳ)` of the convex map `y ↦ R(y)`.
pub(crate) fn add_tangent(
    plp: &mut ParamLp,
    w: usize,
    y: &[Affine],
    ybar: &[f64],
    value: f64,
    q: &[f64],
    n: usize,
) -> Result<(), crate::lp::LpError> {
    let mut row = Affine::var(n, w, -1.0);
    for ((yj, qj), yb) in y.iter().zip(q).zip(ybar) {
        if *qj != 0.0 {
            row.add(yj, *qj);
            row.c -= qj * yb;
        }
    }
    row.c += value;
    plp.add_le(&row)
}

/// Jointly minimizes `E[Ψ(c(x,u,ξ) + V̲(Ax + Bu + b), θ)]` over the control
/// set at `x` and over `θ`.
///
/// Polyhedral measures are solved as one LP with future-cost cuts generated on
/// demand. The KL measure is handled by an outer approximation of
/// `y ↦ R(y)` with tangents at the exact realized values; the best exact
/// iterate is returned together with the LP lower bound.
pub fn solve_stage(
    problem: &SocProblem,
    t: usize,
    x: &[f64],
    future: FutureCost<'_>,
    measure: &RiskMeasure,
    opts: &StageOptions,
) -> Result<StageSolution, StageError> {
    let n = problem.state_dims[t];
    if x.len() != n {
        return Err(StageError::Dimension {
            expected: n,
            found: x.len(),
        });
    }
    let lp_err = |e| StageError::from_lp(t, x, e);
    let m = problem.control_dims[t];
    let stage = problem.stage(t);
    let probs = stage.probs();
    let nj = probs.len();
    let cs = &stage.control_set;

    let mut plp = ParamLp::new(x);
    let u_vars: Vec<usize> = (0..m).map(|i| plp.add_var(0.0, cs.lower(i), cs.upper(i))).collect();
    for row in &cs.rows {
        let e = piece_expr(
            &AffinePiece::new(row.x.clone(), row.u.clone(), -row.rhs),
            &u_vars,
            n,
        );
        plp.add_le(&e).map_err(lp_err)?;
    }

    let mut y = Vec::with_capacity(nj);
    let mut posts = Vec::with_capacity(nj);
    let mut v_vars = Vec::with_capacity(nj);
    let floor = match future {
        FutureCost::Cuts(vf) => {
            if vf.is_empty() {
                return Err(StageError::EmptyPool);
            }
            vf.constant_floor()
        }
        FutureCost::Terminal => None,
    };
    for j in 0..nj {
        let real = &stage.realizations[j];
        let mut yj = Affine::zero(n);
        for term in real.cost.terms() {
            let pieces: Vec<Affine> = term.pieces.iter().map(|p| piece_expr(p, &u_vars, n)).collect();
            add_max_term(&mut plp, &mut yj, &pieces, n).map_err(lp_err)?;
        }
        let post = post_state_exprs(real, &u_vars, n);
        match future {
            FutureCost::Terminal => {
                for term in problem.terminal_cost.terms() {
                    let pieces: Vec<Affine> = term.pieces.iter().map(|p| combine(&post, &p.x, p.c, n)).collect();
                    add_max_term(&mut plp, &mut yj, &pieces, n).map_err(lp_err)?;
                }
            }
            FutureCost::Cuts(vf) => {
                let v = plp.add_var(0.0, floor.unwrap_or(f64::NEG_INFINITY), f64::INFINITY);
                yj.vars.push((v, 1.0));
                v_vars.push(v);
                if floor.is_none() {
                    for c in vf.cuts() {
                        let mut row = combine(&post, &c.a, c.h, n);
                        row.vars.push((v, -1.0));
                        plp.add_le(&row).map_err(lp_err)?;
                    }
                }
            }
        }
        posts.push(post);
        y.push(yj);
    }
    let kl_var = add_risk_objective(&mut plp, measure, &y, &probs, n).map_err(lp_err)?;

    let mut added: Vec<Vec<bool>> = match future {
        FutureCost::Cuts(vf) => vec![vec![floor.is_none(); vf.len()]; nj],
        FutureCost::Terminal => Vec::new(),
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut certified = true;
    let mut rounds = 0;
    'kelley: loop {
        plp.solve().map_err(lp_err)?;
        // Nearly parallel tangents can make the tableau too ill-conditioned to
        // accept another row; the relaxation of the previous round stays valid.
        let snapshot = (kl_var.is_some() && best.is_some()).then(|| plp.clone());
        let sol = plp.solution().to_vec();
        let u: Vec<f64> = u_vars.iter().map(|&k| sol[k]).collect();
        let mut new_rows = 0;
        if let FutureCost::Cuts(vf) = future {
            for j in 0..nj {
                let post = stage.realizations[j].transition(x, &u);
                let (val, idx) = vf.argmax(&post).expect("nonempty pool");
                let vj = sol[v_vars[j]];
                if val - vj > opts.cut_tol * (1.0 + val.abs()) && !added[j][idx] {
                    let c = &vf.cuts()[idx];
                    let mut row = combine(&posts[j], &c.a, c.h, n);
                    row.vars.push((v_vars[j], -1.0));
                    if let Err(e) = plp.add_le(&row) {
                        match snapshot {
                            Some(prev) => {
                                plp = prev;
                                certified = false;
                                break 'kelley;
                            }
                            None => return Err(lp_err(e)),
                        }
                    }
                    added[j][idx] = true;
                    new_rows += 1;
                }
            }
        }
        let Some(w) = kl_var else {
            if new_rows == 0 {
                best = Some((f64::NAN, u));
                break;
            }
            continue;
        };
        let ybar = exact_values(problem, t, x, &u, future);
        let (value, _, q) = measure.risk_with_weights(&ybar, &probs)?;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, u));
        }
        let upper = best.as_ref().unwrap().0;
        let lower = plp.value();
        if new_rows == 0 && upper - lower <= opts.kelley_rel_tol * (1.0 + upper.abs()) {
            break;
        }
        if rounds >= opts.kelley_max_rounds {
            certified = false;
            break;
        }
        let before = snapshot.unwrap_or_else(|| plp.clone());
        if add_tangent(&mut plp, w, &y, &ybar, value, &q, n).is_err() {
            plp = before;
            certified = false;
            break;
        }
        rounds += 1;
    }

    let u = best.expect("loop sets an iterate").1;
    let post_states: Vec<Vec<f64>> = stage.realizations.iter().map(|r| r.transition(x, &u)).collect();
    let stage_costs: Vec<f64> = stage.realizations.iter().map(|r| r.cost.eval(x, &u)).collect();
    let future_values: Vec<f64> = post_states.iter().map(|p| future.eval(problem, p)).collect();
    let values: Vec<f64> = stage_costs.iter().zip(&future_values).map(|(c, v)| c + v).collect();
    let theta = measure.argmin_theta_raw(&values, &probs)?;
    let objective = measure.objective_raw(&values, &probs, &theta);
    let lower_objective = plp.value();

    let cut_gradient = match opts.cut_rule {
        CutRule::Dual => plp.value_gradient(),
        CutRule::ChainRule => {
            if cs.is_state_coupled() {
                return Err(StageError::Unsupported(
                    "chain-rule cuts need a control set independent of the state".into(),
                ));
            }
            let mut g = vec![0.0; n];
            for (j, real) in stage.realizations.iter().enumerate() {
                let q = probs[j] * measure.psi_subgrad_raw(values[j], &theta);
                let gc = real.cost.subgrad_x(x, &u);
                let gv = real.a_transpose_mul(&future.subgrad(problem, &post_states[j])?);
                for k in 0..n {
                    g[k] += q * (gc[k] + gv[k]);
                }
            }
            g
        }
    };

    Ok(StageSolution {
        u,
        theta,
        objective,
        lower_objective: if kl_var.is_some() { lower_objective.min(objective) } else { lower_objective },
        post_states,
        stage_costs,
        future_values,
        values,
        cut_gradient,
        certified,
    })
}

/// `yⱼ = cⱼ(x, u) + future(x⁺ⱼ)` for every realization.
pub(crate) fn exact_values(problem: &SocProblem, t: usize, x: &[f64], u: &[f64], future: FutureCost<'_>) -> Vec<f64> {
    problem
        .stage(t)
        .realizations
        .iter()
        .map(|r| r.cost.eval(x, u) + future.eval(problem, &r.transition(x, u)))
        .collect()
}
