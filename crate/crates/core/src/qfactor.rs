//! Cutting-plane approximation of the pre-minimization stage functions
//! `Q_t(x, u, θ) = E[Ψ(c_t(x, u, ξ) + V_{t+1}(A x + B u + b), θ)]`.
//!
//! Every subproblem is a linear program in `(u, θ)` for all four measure
//! kinds; the price is a larger space to cover with cuts.

use crate::engine::{BoundsRow, EngineError, TrainOptions, EVAL_STREAM, TRAIN_STREAM};
use crate::lp::LpError;
use crate::model::{derive_seed, dot, sample_path, AffinePiece, SamplePath, SocProblem};
use crate::policy::{Decision, Policy};
use crate::polyhedral::{Affine, Cut, ParamLp, PiecewiseAffineVF, StageError};
use crate::risk::{RiskMeasure, Theta};
use crate::ubound::{evaluate_policy, BoundError, EvalOptions, EvaluationResult};

/// Cut pool for `Q_t` over the stacked point `[x; u; θ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QFunctionApprox {
    pub stage: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    pub theta_dim: usize,
    pub pool: PiecewiseAffineVF,
    /// Box imposed on `θ` in the stage minimization.
    pub theta_box: Vec<(f64, f64)>,
}

impl QFunctionApprox {
    pub fn eval(&self, x: &[f64], u: &[f64], theta: &[f64]) -> f64 {
        self.pool.eval(&stack(x, u, theta))
    }
}

fn stack(x: &[f64], u: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + u.len() + theta.len());
    z.extend_from_slice(x);
    z.extend_from_slice(u);
    z.extend_from_slice(theta);
    z
}

/// Result of `min_{u ∈ U_t(x), θ ∈ box} Q̲_t(x, u, θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QStageSolution {
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub value: f64,
    /// Subgradient of the minimal value in `x`.
    pub gradient: Vec<f64>,
}

/// Per-stage boxes for `θ` built from bounds on the realized values
/// `y = c_t + V_{t+1}`: `[lo − range, hi + range]` for thresholds and shifts,
/// and a range-scaled interval for the KL `λ`.
pub fn theta_boxes(problem: &SocProblem, measure: &RiskMeasure) -> Result<Vec<Vec<(f64, f64)>>, EngineError> {
    let t_count = problem.num_stages();
    let (stage, term) = problem.cost_bounds();
    let r0 = measure.risk_eval_raw(&[0.0], &[1.0])?;
    let mut lo = vec![0.0; t_count + 1];
    let mut hi = vec![0.0; t_count + 1];
    (lo[t_count], hi[t_count]) = term;
    for t in (0..t_count).rev() {
        lo[t] = stage[t].0 + r0 + lo[t + 1];
        hi[t] = stage[t].1 + r0 + hi[t + 1];
    }
    let d = measure.theta_dim();
    let mut out = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let (ylo, yhi) = (stage[t].0 + lo[t + 1], stage[t].1 + hi[t + 1]);
        if d > 0 && !(ylo.is_finite() && yhi.is_finite()) {
            return Err(EngineError::Config(format!(
                "stage {t}: the parameter box needs finite cost bounds"
            )));
        }
        let range = yhi - ylo;
        let shift = (ylo - range, yhi + range);
        out.push(match measure {
            RiskMeasure::Expectation => Vec::new(),
            RiskMeasure::MeanAvar(_) | RiskMeasure::Oce(_) => vec![shift; d],
            RiskMeasure::Kl(_) => vec![shift, ((1e-6 * range).max(1e-9), (1e3 * range).max(1.0))],
        });
    }
    Ok(out)
}

/// Minimizes the stage `Q` approximation at `x`; cuts enter the LP on demand.
pub fn solve_q_stage(problem: &SocProblem, q: &QFunctionApprox, x: &[f64]) -> Result<QStageSolution, StageError> {
    let t = q.stage;
    let n = q.state_dim;
    if x.len() != n {
        return Err(StageError::Dimension {
            expected: n,
            found: x.len(),
        });
    }
    let lp_err = |e: LpError| StageError::from_lp(t, x, e);
    let cs = &problem.stage(t).control_set;
    let mut plp = ParamLp::new(x);
    let u_vars: Vec<usize> = (0..q.control_dim)
        .map(|i| plp.add_var(0.0, cs.lower(i), cs.upper(i)))
        .collect();
    let th_vars: Vec<usize> = q.theta_box.iter().map(|&(l, h)| plp.add_var(0.0, l, h)).collect();
    let floor = q.pool.constant_floor();
    let w = plp.add_var(1.0, floor.unwrap_or(f64::NEG_INFINITY), f64::INFINITY);
    for row in &cs.rows {
        let p = AffinePiece::new(row.x.clone(), row.u.clone(), -row.rhs);
        let mut e = Affine::zero(n);
        e.x.copy_from_slice(&p.x);
        e.vars = p.u.iter().zip(&u_vars).filter(|(a, _)| **a != 0.0).map(|(a, v)| (*v, *a)).collect();
        e.c = p.c;
        plp.add_le(&e).map_err(lp_err)?;
    }
    let cut_row = |c: &Cut| {
        let mut e = Affine::zero(n);
        e.x.copy_from_slice(&c.a[..n]);
        e.vars = u_vars
            .iter()
            .chain(&th_vars)
            .zip(&c.a[n..])
            .filter(|(_, a)| **a != 0.0)
            .map(|(v, a)| (*v, *a))
            .collect();
        e.vars.push((w, -1.0));
        e.c = c.h;
        e
    };
    let mut added = vec![floor.is_none(); q.pool.len()];
    if floor.is_none() {
        for c in q.pool.cuts() {
            plp.add_le(&cut_row(c)).map_err(lp_err)?;
        }
    }
    loop {
        plp.solve().map_err(lp_err)?;
        let sol = plp.solution();
        let u: Vec<f64> = u_vars.iter().map(|&k| sol[k]).collect();
        let th: Vec<f64> = th_vars.iter().map(|&k| sol[k]).collect();
        let (val, idx) = q.pool.argmax(&stack(x, &u, &th)).ok_or(StageError::EmptyPool)?;
        let wv = sol[w];
        if added[idx] || val - wv <= 1e-9 * (1.0 + val.abs()) {
            return Ok(QStageSolution {
                u,
                theta: th,
                value: plp.value(),
                gradient: plp.value_gradient(),
            });
        }
        plp.add_le(&cut_row(&q.pool.cuts()[idx])).map_err(lp_err)?;
        added[idx] = true;
    }
}

/// The Q cut at `(x̂, û, θ̂)` given the next-stage values and gradients at the
/// post-decision states.
fn q_cut(
    problem: &SocProblem,
    measure: &RiskMeasure,
    t: usize,
    point: (&[f64], &[f64], &[f64]),
    next: &[(f64, Vec<f64>)],
    born: usize,
) -> Result<Cut, StageError> {
    let (x, u, th) = point;
    let theta = measure.theta_from_slice(th)?;
    let stage = problem.stage(t);
    let (n, m, d) = (x.len(), u.len(), th.len());
    let mut g = vec![0.0; n + m + d];
    let mut value = 0.0;
    for (real, (v_next, g_next)) in stage.realizations.iter().zip(next) {
        let y = real.cost.eval(x, u) + v_next;
        let s = measure.psi(y, &theta)?;
        let ds = measure.psi_subgrad(y, &theta)?;
        let dth = measure.psi_grad_theta(y, &theta)?;
        value += real.prob * s;
        let gx = real.cost.subgrad_x(x, u);
        let gu = real.cost.subgrad_u(x, u);
        let ax = real.a_transpose_mul(g_next);
        let bu = real.b_transpose_mul(g_next);
        let w = real.prob * ds;
        for i in 0..n {
            g[i] += w * (gx[i] + ax[i]);
        }
        for i in 0..m {
            g[n + i] += w * (gu[i] + bu[i]);
        }
        for i in 0..d {
            g[n + m + i] += real.prob * dth[i];
        }
    }
    let z = stack(x, u, th);
    Ok(Cut::at_point(t, value, g, &z, born))
}

/// The policy `(û_t, θ̂_t) ∈ argmin Q̲_t(x, ·, ·)`.
#[derive(Debug, Clone)]
pub struct QPolicy<'a> {
    pub problem: &'a SocProblem,
    pub qs: &'a [QFunctionApprox],
    pub measure: &'a RiskMeasure,
}

impl Policy for QPolicy<'_> {
    fn decide(&self, t: usize, x: &[f64]) -> Result<Decision, StageError> {
        let s = solve_q_stage(self.problem, &self.qs[t], x)?;
        let stage = self.problem.stage(t);
        Ok(Decision {
            theta: self.measure.theta_from_slice(&s.theta)?,
            stage_costs: stage.realizations.iter().map(|r| r.cost.eval(x, &s.u)).collect(),
            post_states: stage.realizations.iter().map(|r| r.transition(x, &s.u)).collect(),
            u: s.u,
        })
    }
}

/// Training driver of the Q-factor variant.
pub struct QTrainer<'a> {
    problem: &'a SocProblem,
    measure: RiskMeasure,
    opts: TrainOptions,
    qs: Vec<QFunctionApprox>,
    iteration: usize,
    history: Vec<BoundsRow>,
    started: std::time::Instant,
}

impl<'a> QTrainer<'a> {
    pub fn new(problem: &'a SocProblem, measure: RiskMeasure, opts: TrainOptions) -> Result<Self, EngineError> {
        measure.validate()?;
        let t_count = problem.num_stages();
        let lower = match &opts.lower_bounds {
            Some(l) if l.len() >= t_count => l.clone(),
            Some(_) => return Err(EngineError::Config("too few initial lower bounds".into())),
            None => problem.value_lower_bounds(&measure)?,
        };
        let boxes = theta_boxes(problem, &measure)?;
        let d = measure.theta_dim();
        let mut qs = Vec::with_capacity(t_count);
        for (t, theta_box) in boxes.into_iter().enumerate() {
            if !lower[t].is_finite() {
                return Err(EngineError::Config(format!("stage {t} has no finite cost lower bound")));
            }
            let (n, m) = (problem.state_dims[t], problem.control_dims[t]);
            qs.push(QFunctionApprox {
                stage: t,
                state_dim: n,
                control_dim: m,
                theta_dim: d,
                pool: PiecewiseAffineVF::with_lower_bound(t, n + m + d, lower[t]),
                theta_box,
            });
        }
        Ok(Self {
            problem,
            measure,
            opts,
            qs,
            iteration: 0,
            history: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    pub fn q_functions(&self) -> &[QFunctionApprox] {
        &self.qs
    }

    pub fn history(&self) -> &[BoundsRow] {
        &self.history
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn policy(&self) -> QPolicy<'_> {
        QPolicy {
            problem: self.problem,
            qs: &self.qs,
            measure: &self.measure,
        }
    }

    /// `min_{u, θ} Q̲_0(x̂_0, u, θ)`.
    pub fn lower_bound(&self) -> Result<f64, StageError> {
        Ok(solve_q_stage(self.problem, &self.qs[0], &self.problem.initial_state)?.value)
    }

    /// Cut pools in the checkpoint layout (stacked coordinates `[x; u; θ]`).
    pub fn cuts(&self) -> Vec<Cut> {
        self.qs.iter().flat_map(|q| q.pool.cuts().iter().cloned()).collect()
    }

    fn iterate(&mut self, k: usize, path: &SamplePath) -> Result<(), (usize, StageError)> {
        let t_count = self.problem.num_stages();
        let mut xs = vec![self.problem.initial_state.clone()];
        let mut us = Vec::with_capacity(t_count);
        let mut ths = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let s = solve_q_stage(self.problem, &self.qs[t], &xs[t]).map_err(|e| (t, e))?;
            let next = self.problem.realization(t, path.indices[t]).transition(&xs[t], &s.u);
            xs.push(next);
            us.push(s.u);
            ths.push(s.theta);
        }
        for t in (0..t_count).rev() {
            let stage = self.problem.stage(t);
            let mut next = Vec::with_capacity(stage.realizations.len());
            for real in &stage.realizations {
                let post = real.transition(&xs[t], &us[t]);
                next.push(if t + 1 == t_count {
                    (self.problem.terminal_value(&post), self.problem.terminal_subgrad(&post))
                } else {
                    let s = solve_q_stage(self.problem, &self.qs[t + 1], &post).map_err(|e| (t + 1, e))?;
                    (s.value, s.gradient)
                });
            }
            let mut cut = q_cut(self.problem, &self.measure, t, (&xs[t], &us[t], &ths[t]), &next, k)
                .map_err(|e| (t, e))?;
            if !cut.h.is_finite() || cut.a.iter().any(|v| !v.is_finite()) {
                // Ψ overflows at the LP's θ (a tiny KL λ far from the data):
                // move the trial θ to the minimizer for the current values.
                let ys: Vec<f64> = stage
                    .realizations
                    .iter()
                    .zip(&next)
                    .map(|(r, (v, _))| r.cost.eval(&xs[t], &us[t]) + v)
                    .collect();
                let theta = self.measure.argmin_theta_raw(&ys, &stage.probs()).map_err(|e| (t, e.into()))?;
                ths[t] = theta.to_vec();
                cut = q_cut(self.problem, &self.measure, t, (&xs[t], &us[t], &ths[t]), &next, k)
                    .map_err(|e| (t, e))?;
            }
            self.qs[t].pool.add_cut(cut).map_err(|e| (t, e))?;
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<BoundsRow, EngineError> {
        let k = self.iteration + 1;
        for i in 0..self.opts.forward_paths {
            let base = derive_seed(derive_seed(self.opts.seed, TRAIN_STREAM), k as u64);
            let seed = if i == 0 { base } else { derive_seed(base, i as u64) };
            let path = sample_path(self.problem, seed);
            self.iterate(k, &path).map_err(|(stage, source)| EngineError::Stage {
                iteration: k,
                stage,
                source,
            })?;
        }
        let lower_bound = self.lower_bound().map_err(|source| EngineError::Stage {
            iteration: k,
            stage: 0,
            source,
        })?;
        self.iteration = k;
        let mut row = BoundsRow {
            iteration: k,
            lower_bound,
            upper_mean: None,
            upper_std: None,
            upper_bound: None,
            wall_time_ms: 0,
        };
        if self.opts.eval_every > 0 && k.is_multiple_of(self.opts.eval_every) {
            let seed = derive_seed(derive_seed(self.opts.seed, EVAL_STREAM), k as u64);
            let r = self
                .evaluate(self.opts.eval_samples, seed)
                .map_err(|source| EngineError::Evaluation { iteration: k, source })?;
            row.upper_mean = Some(r.mean);
            row.upper_std = Some(r.std);
            row.upper_bound = Some(r.bound);
        }
        row.wall_time_ms = self.started.elapsed().as_millis();
        self.history.push(row.clone());
        Ok(row)
    }

    pub fn evaluate(&self, samples: usize, seed: u64) -> Result<EvaluationResult, BoundError> {
        let eval = EvalOptions {
            samples,
            z: self.opts.z,
            seed,
            threads: self.opts.threads,
            ..EvalOptions::default()
        };
        evaluate_policy(self.problem, &self.policy(), &self.measure, &eval)
    }

    pub fn run(&mut self, iterations: usize) -> Result<&[BoundsRow], EngineError> {
        let start = self.history.len();
        for _ in 0..iterations {
            self.step()?;
        }
        Ok(&self.history[start..])
    }
}

/// Trains the Q-factor variant for `iterations` iterations.
pub fn train_q<'a>(
    problem: &'a SocProblem,
    measure: &RiskMeasure,
    iterations: usize,
    opts: TrainOptions,
) -> Result<QTrainer<'a>, EngineError> {
    let mut trainer = QTrainer::new(problem, measure.clone(), opts)?;
    trainer.run(iterations)?;
    Ok(trainer)
}

/// `Q_t(x, u, θ)` computed with a given next-stage value function.
pub fn q_value_with(
    problem: &SocProblem,
    measure: &RiskMeasure,
    t: usize,
    x: &[f64],
    u: &[f64],
    theta: &Theta,
    next_value: impl Fn(&[f64]) -> f64,
) -> Result<f64, StageError> {
    let mut acc = 0.0;
    for real in &problem.stage(t).realizations {
        let y = real.cost.eval(x, u) + next_value(&real.transition(x, u));
        acc += real.prob * measure.psi(y, theta)?;
    }
    Ok(acc)
}

#[doc(hidden)]
pub fn cut_value(cut: &Cut, x: &[f64], u: &[f64], theta: &[f64]) -> f64 {
    dot(&cut.a, &stack(x, u, theta)) + cut.h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::train;
    use crate::model::{tiny_instance, TinyFamily};
    use crate::oracle::{exact_optimal_value, OracleOptions};

    #[test]
    fn lower_bound_stays_below_optimum() {
        let p = tiny_instance(TinyFamily::Inventory1, 3, 2);
        let m = RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.2]).unwrap();
        let v = exact_optimal_value(&p, &m, &OracleOptions::default()).unwrap().value;
        let mut tr = QTrainer::new(&p, m, TrainOptions { eval_every: 0, ..Default::default() }).unwrap();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..200 {
            let l = tr.step().unwrap().lower_bound;
            assert!(l <= v + 1e-6, "{l} > {v}");
            assert!(l >= last - 1e-9);
            last = l;
        }
        assert!(v - last < 1e-3 * (1.0 + v.abs()), "{last} vs {v}");
    }

    #[test]
    fn expectation_variant_reaches_the_same_bound() {
        let p = tiny_instance(TinyFamily::Reservoir, 2, 2);
        let opts = TrainOptions { eval_every: 0, ..Default::default() };
        let q = train_q(&p, &RiskMeasure::Expectation, 200, opts.clone()).unwrap();
        let v = train(&p, &RiskMeasure::Expectation, 200, opts).unwrap();
        let lq = q.history().last().unwrap().lower_bound;
        assert!((lq - v.lower_bound(&p)).abs() < 1e-6);
    }
}
