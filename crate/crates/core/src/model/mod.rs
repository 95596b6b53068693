//! Stochastic optimal control problems with affine dynamics, polyhedral costs and
//! finitely many stagewise-independent realizations per stage.
//!
//! Stages are indexed from 0. Stage `t` maps state `x_t` (dimension
//! `state_dims[t]`) and control `u_t` (dimension `control_dims[t]`) to
//! `x_{t+1} = A x_t + B u_t + b` for the realization drawn at that stage.

mod corpus;
mod hydro;
mod sampling;

pub use corpus::{tiny_corpus, tiny_instance, TinyFamily};
pub use hydro::{generate_hydrothermal, HydroParams, ThermalUnit};
pub use sampling::{derive_seed, sample_path, SamplePath};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpError, Row};
use crate::risk::{RiskError, RiskMeasure};

pub const FORMAT_VERSION: u32 = 1;

/// Tolerance on the per-stage probability sum.
pub const PROB_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: expected dimension {expected}, found {found}")]
    Dimension {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("stage_data[{stage}]: realization probabilities sum to {sum}, expected 1")]
    ProbabilitySum { stage: usize, sum: f64 },
    #[error("stage_data[{stage}]: control set is empty at the initial state")]
    EmptyControlSet { stage: usize },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("risk measure: {0}")]
    Risk(#[from] RiskError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// `xᵀ·x + uᵀ·u + c`. Empty vectors stand for zeros and are expanded at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffinePiece {
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

impl AffinePiece {
    pub fn new(x: Vec<f64>, u: Vec<f64>, c: f64) -> Self {
        Self { x, u, c }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Vec::new(), Vec::new(), c)
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        dot(&self.x, x) + dot(&self.u, u) + self.c
    }
}

/// A convex term `max_q piece_q(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTerm {
    pub pieces: Vec<AffinePiece>,
}

impl CostTerm {
    pub fn new(pieces: Vec<AffinePiece>) -> Self {
        Self { pieces }
    }

    pub fn affine(piece: AffinePiece) -> Self {
        Self::new(vec![piece])
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(x, u))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first piece attaining the max.
    pub fn active_piece(&self, x: &[f64], u: &[f64]) -> usize {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for (q, p) in self.pieces.iter().enumerate() {
            let v = p.eval(x, u);
            if v > val {
                val = v;
                best = q;
            }
        }
        best
    }
}

/// Convex piecewise-linear cost: a sum of max-affine terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(pub Vec<CostTerm>);

impl Cost {
    pub fn terms(&self) -> &[CostTerm] {
        &self.0
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.0.iter().map(|t| t.eval(x, u)).sum()
    }

    /// A subgradient with respect to `x` (lowest-index active piece per term).
    pub fn subgrad_x(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.0 {
            let p = &t.pieces[t.active_piece(x, u)];
            for (gi, pi) in g.iter_mut().zip(&p.x) {
                *gi += pi;
            }
        }
        g
    }

    /// A subgradient with respect to `u`.
    pub fn subgrad_u(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        for t in &self.0 {
            let p = &t.pieces[t.active_piece(x, u)];
            for (gi, pi) in g.iter_mut().zip(&p.u) {
                *gi += pi;
            }
        }
        g
    }

    /// Interval lower bound over the boxes `x ∈ [xl, xu]`, `u ∈ [ul, uu]`.
    pub fn lower_bound(&self, xb: &[Interval], ub: &[Interval]) -> f64 {
        self.0
            .iter()
            .map(|t| {
                t.pieces
                    .iter()
                    .map(|p| affine_range(&p.x, xb).0 + affine_range(&p.u, ub).0 + p.c)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    /// Interval upper bound over the boxes.
    pub fn upper_bound(&self, xb: &[Interval], ub: &[Interval]) -> f64 {
        self.0
            .iter()
            .map(|t| {
                t.pieces
                    .iter()
                    .map(|p| affine_range(&p.x, xb).1 + affine_range(&p.u, ub).1 + p.c)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    fn normalize(&mut self, n: usize, m: usize, path: &str) -> Result<(), ModelError> {
        if self.0.is_empty() {
            return Err(invalid(path, "cost needs at least one term"));
        }
        for (k, term) in self.0.iter_mut().enumerate() {
            if term.pieces.is_empty() {
                return Err(invalid(format!("{path}[{k}]"), "cost term needs at least one piece"));
            }
            for (q, p) in term.pieces.iter_mut().enumerate() {
                let pp = format!("{path}[{k}].pieces[{q}]");
                expand(&mut p.x, n, &format!("{pp}.x"))?;
                expand(&mut p.u, m, &format!("{pp}.u"))?;
                if p.x.iter().chain(&p.u).chain(std::iter::once(&p.c)).any(|v| !v.is_finite()) {
                    return Err(invalid(pp, "non-finite coefficient"));
                }
            }
        }
        Ok(())
    }
}

/// A closed interval, possibly unbounded.
pub type Interval = (f64, f64);

fn affine_range(coefs: &[f64], boxes: &[Interval]) -> Interval {
    let (mut lo, mut hi) = (0.0, 0.0);
    for (&a, &(l, u)) in coefs.iter().zip(boxes) {
        if a == 0.0 {
            continue;
        }
        let (p, q) = if a > 0.0 { (a * l, a * u) } else { (a * u, a * l) };
        lo += p;
        hi += q;
    }
    (lo, hi)
}

fn expand(v: &mut Vec<f64>, n: usize, path: &str) -> Result<(), ModelError> {
    if v.is_empty() {
        *v = vec![0.0; n];
    } else if v.len() != n {
        return Err(ModelError::Dimension {
            path: path.into(),
            expected: n,
            found: v.len(),
        });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `uᵀ·u + xᵀ·x ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlRow {
    #[serde(default)]
    pub u: Vec<f64>,
    #[serde(default)]
    pub x: Vec<f64>,
    pub rhs: f64,
}

/// Polyhedral, possibly state-dependent control set.
///
/// `null` bounds are infinite; omitted bound lists mean `u ≥ 0` with no upper bound.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSet {
    #[serde(default)]
    pub lower: Vec<Option<f64>>,
    #[serde(default)]
    pub upper: Vec<Option<f64>>,
    #[serde(default)]
    pub rows: Vec<ControlRow>,
}

impl ControlSet {
    pub fn lower(&self, i: usize) -> f64 {
        self.lower[i].unwrap_or(f64::NEG_INFINITY)
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.upper[i].unwrap_or(f64::INFINITY)
    }

    pub fn bounds(&self) -> Vec<Interval> {
        (0..self.lower.len()).map(|i| (self.lower(i), self.upper(i))).collect()
    }

    /// Whether any row involves the state.
    pub fn is_state_coupled(&self) -> bool {
        self.rows.iter().any(|r| r.x.iter().any(|v| *v != 0.0))
    }

    /// Largest constraint violation of `u` at state `x`.
    pub fn violation(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            worst = worst.max(self.lower(i) - ui).max(ui - self.upper(i));
        }
        for r in &self.rows {
            worst = worst.max(dot(&r.u, u) + dot(&r.x, x) - r.rhs);
        }
        worst
    }

    fn normalize(&mut self, n: usize, m: usize, path: &str) -> Result<(), ModelError> {
        if self.lower.is_empty() {
            self.lower = vec![Some(0.0); m];
        }
        if self.upper.is_empty() {
            self.upper = vec![None; m];
        }
        for (name, v) in [("lower", &self.lower), ("upper", &self.upper)] {
            if v.len() != m {
                return Err(ModelError::Dimension {
                    path: format!("{path}.{name}"),
                    expected: m,
                    found: v.len(),
                });
            }
        }
        for i in 0..m {
            let (l, u) = (self.lower(i), self.upper(i));
            if l.is_nan() || u.is_nan() || l > u {
                return Err(invalid(format!("{path}.lower[{i}]"), format!("bounds [{l}, {u}] are empty")));
            }
        }
        for (k, r) in self.rows.iter_mut().enumerate() {
            let rp = format!("{path}.rows[{k}]");
            expand(&mut r.u, m, &format!("{rp}.u"))?;
            expand(&mut r.x, n, &format!("{rp}.x"))?;
            if !r.rhs.is_finite() || r.u.iter().chain(&r.x).any(|v| !v.is_finite()) {
                return Err(invalid(rp, "non-finite coefficient"));
            }
        }
        Ok(())
    }
}

/// One realization `ξ_{tj}` of stage data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Realization {
    pub prob: f64,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b_mat: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub cost: Cost,
}

impl Realization {
    /// `A x + B u + b`
    pub fn transition(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (0..self.b.len())
            .map(|i| dot(&self.a[i], x) + dot(&self.b_mat[i], u) + self.b[i])
            .collect()
    }

    /// `Aᵀ g`
    pub fn a_transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        let n = self.a.first().map_or(0, |r| r.len());
        let mut out = vec![0.0; n];
        for (row, gi) in self.a.iter().zip(g) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * gi;
            }
        }
        out
    }

    /// `Bᵀ g`
    pub fn b_transpose_mul(&self, g: &[f64]) -> Vec<f64> {
        let m = self.b_mat.first().map_or(0, |r| r.len());
        let mut out = vec![0.0; m];
        for (row, gi) in self.b_mat.iter().zip(g) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * gi;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    #[serde(default)]
    pub control_set: ControlSet,
    pub realizations: Vec<Realization>,
}

impl Stage {
    pub fn probs(&self) -> Vec<f64> {
        self.realizations.iter().map(|r| r.prob).collect()
    }
}

/// A finite-horizon stochastic optimal control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocProblem {
    pub version: u32,
    pub stages: usize,
    /// `n_0, …, n_T` (one more than the number of stages).
    pub state_dims: Vec<usize>,
    pub control_dims: Vec<usize>,
    pub stage_data: Vec<Stage>,
    /// Convex piecewise-linear function of the final state; pieces carry no `u`.
    pub terminal_cost: Cost,
    pub initial_state: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_measure: Option<RiskMeasure>,
}

impl SocProblem {
    /// Parses and validates an instance document.
    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut p: SocProblem = serde_path_to_error::deserialize(de).map_err(|e| ModelError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Expands shorthand fields and checks every invariant.
    pub fn validate(&mut self) -> Result<(), ModelError> {
        if self.version != FORMAT_VERSION {
            return Err(invalid("version", format!("unsupported version {}", self.version)));
        }
        let t_count = self.stages;
        if t_count == 0 {
            return Err(invalid("stages", "need at least one stage"));
        }
        let dim = |path: &str, expected: usize, found: usize| -> Result<(), ModelError> {
            if expected != found {
                Err(ModelError::Dimension {
                    path: path.into(),
                    expected,
                    found,
                })
            } else {
                Ok(())
            }
        };
        dim("state_dims", t_count + 1, self.state_dims.len())?;
        dim("control_dims", t_count, self.control_dims.len())?;
        dim("stage_data", t_count, self.stage_data.len())?;
        dim("initial_state", self.state_dims[0], self.initial_state.len())?;
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial_state", "non-finite entry"));
        }
        for t in 0..t_count {
            let (n, n1, m) = (self.state_dims[t], self.state_dims[t + 1], self.control_dims[t]);
            let sp = format!("stage_data[{t}]");
            let stage = &mut self.stage_data[t];
            stage.control_set.normalize(n, m, &format!("{sp}.control_set"))?;
            if stage.realizations.is_empty() {
                return Err(invalid(format!("{sp}.realizations"), "need at least one realization"));
            }
            let mut sum = 0.0;
            for (j, r) in stage.realizations.iter_mut().enumerate() {
                let rp = format!("{sp}.realizations[{j}]");
                if !(r.prob > 0.0 && r.prob <= 1.0) {
                    return Err(invalid(format!("{rp}.prob"), format!("probability {} outside (0, 1]", r.prob)));
                }
                sum += r.prob;
                check_matrix(&r.a, n1, n, &format!("{rp}.A"))?;
                check_matrix(&r.b_mat, n1, m, &format!("{rp}.B"))?;
                dim(&format!("{rp}.b"), n1, r.b.len())?;
                if r.b.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(format!("{rp}.b"), "non-finite entry"));
                }
                r.cost.normalize(n, m, &format!("{rp}.cost"))?;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(ModelError::ProbabilitySum { stage: t, sum });
            }
        }
        let n_final = self.state_dims[t_count];
        self.terminal_cost.normalize(n_final, 0, "terminal_cost")?;
        if let Some(rm) = &self.risk_measure {
            rm.validate()?;
        }
        if !self.control_set_feasible(0, &self.initial_state.clone()) {
            return Err(ModelError::EmptyControlSet { stage: 0 });
        }
        Ok(())
    }

    fn control_set_feasible(&self, t: usize, x: &[f64]) -> bool {
        let cs = &self.stage_data[t].control_set;
        let m = self.control_dims[t];
        let mut lp = LinearProgram::new(m);
        for i in 0..m {
            lp.lower[i] = cs.lower(i);
            lp.upper[i] = cs.upper(i);
        }
        for r in &cs.rows {
            lp.add_row(Row::le(
                r.u.iter().copied().enumerate().collect(),
                r.rhs - dot(&r.x, x),
            ));
        }
        !matches!(lp.solve(), Err(LpError::Infeasible))
    }

    pub fn num_stages(&self) -> usize {
        self.stages
    }

    pub fn stage(&self, t: usize) -> &Stage {
        &self.stage_data[t]
    }

    pub fn realization(&self, t: usize, j: usize) -> &Realization {
        &self.stage_data[t].realizations[j]
    }

    pub fn num_realizations(&self, t: usize) -> usize {
        self.stage_data[t].realizations.len()
    }

    pub fn terminal_value(&self, x: &[f64]) -> f64 {
        self.terminal_cost.eval(x, &[])
    }

    pub fn terminal_subgrad(&self, x: &[f64]) -> Vec<f64> {
        self.terminal_cost.subgrad_x(x, &[])
    }

    /// Number of scenario paths `Π_t N_t`, saturating.
    pub fn scenario_count(&self) -> u128 {
        self.stage_data
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.realizations.len() as u128))
    }

    /// Interval hull of the reachable states `x_0, …, x_T` given the control bounds.
    pub fn state_bounds(&self) -> Vec<Vec<Interval>> {
        let mut out = vec![self.initial_state.iter().map(|&v| (v, v)).collect::<Vec<_>>()];
        for t in 0..self.stages {
            let xb = &out[t];
            let ub = self.stage_data[t].control_set.bounds();
            let n1 = self.state_dims[t + 1];
            let mut next = vec![(f64::INFINITY, f64::NEG_INFINITY); n1];
            for r in &self.stage_data[t].realizations {
                for (i, nb) in next.iter_mut().enumerate() {
                    let (al, ah) = affine_range(&r.a[i], xb);
                    let (bl, bh) = affine_range(&r.b_mat[i], &ub);
                    nb.0 = nb.0.min(al + bl + r.b[i]);
                    nb.1 = nb.1.max(ah + bh + r.b[i]);
                }
            }
            out.push(next);
        }
        out
    }

    /// Interval bounds `[lo_t, hi_t]` on every stage cost, plus the terminal cost.
    pub fn cost_bounds(&self) -> (Vec<Interval>, Interval) {
        let xs = self.state_bounds();
        let stage = (0..self.stages)
            .map(|t| {
                let ub = self.stage_data[t].control_set.bounds();
                self.stage_data[t].realizations.iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), r| {
                        (
                            lo.min(r.cost.lower_bound(&xs[t], &ub)),
                            hi.max(r.cost.upper_bound(&xs[t], &ub)),
                        )
                    },
                )
            })
            .collect();
        let term = (
            self.terminal_cost.lower_bound(&xs[self.stages], &[]),
            self.terminal_cost.upper_bound(&xs[self.stages], &[]),
        );
        (stage, term)
    }

    /// Global lower bounds `L_t ≤ V_t(x)` for `t = 0, …, T` under `measure`.
    ///
    /// Uses `R(Z) ≥ min Z + R(0)`, which follows from monotonicity and
    /// translation equivariance. Entries are `-inf` when costs are not bounded below.
    pub fn value_lower_bounds(&self, measure: &RiskMeasure) -> Result<Vec<f64>, RiskError> {
        let r0 = measure.risk_eval_raw(&[0.0], &[1.0])?;
        let (stage, term) = self.cost_bounds();
        let mut out = vec![0.0; self.stages + 1];
        out[self.stages] = term.0;
        for t in (0..self.stages).rev() {
            out[t] = stage[t].0 + r0 + out[t + 1];
        }
        Ok(out)
    }
}

fn check_matrix(m: &[Vec<f64>], rows: usize, cols: usize, path: &str) -> Result<(), ModelError> {
    if m.len() != rows {
        return Err(ModelError::Dimension {
            path: path.into(),
            expected: rows,
            found: m.len(),
        });
    }
    for (i, r) in m.iter().enumerate() {
        if r.len() != cols {
            return Err(ModelError::Dimension {
                path: format!("{path}[{i}]"),
                expected: cols,
                found: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("{path}[{i}]"), "non-finite entry"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "version": 1,
        "stages": 1,
        "state_dims": [1, 1],
        "control_dims": [1],
        "stage_data": [{
            "control_set": {"lower": [0], "upper": [1]},
            "realizations": [{"prob": 1.0, "A": [[1]], "B": [[1]], "b": [0],
                              "cost": [{"pieces": [{"u": [2]}]}]}]
        }],
        "terminal_cost": [{"pieces": [{"c": 0}]}],
        "initial_state": [0]
    }"#;

    #[test]
    fn minimal_document_loads() {
        let p = SocProblem::from_json_str(MINIMAL).unwrap();
        assert_eq!(p.num_stages(), 1);
        assert_eq!(p.realization(0, 0).cost.0[0].pieces[0].x, vec![0.0]);
        let again = SocProblem::from_json_str(&p.to_json_string()).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn probability_error_names_the_stage() {
        let doc = MINIMAL.replace("\"prob\": 1.0", "\"prob\": 0.98");
        let err = SocProblem::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, ModelError::ProbabilitySum { stage: 0, .. }));
        assert!(err.to_string().contains("stage_data[0]"));
    }

    #[test]
    fn schema_errors_carry_a_path() {
        let doc = MINIMAL.replace("\"prob\": 1.0", "\"prob\": 1.0, \"bogus\": 3");
        let err = SocProblem::from_json_str(&doc).unwrap_err();
        match err {
            ModelError::Schema { path, .. } => assert!(path.starts_with("stage_data[0].realizations[0]"), "{path}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn dimension_errors() {
        let doc = MINIMAL.replace("\"B\": [[1]]", "\"B\": [[1, 2]]");
        let err = SocProblem::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, ModelError::Dimension { .. }), "{err}");
    }

    #[test]
    fn empty_control_set_is_rejected() {
        let doc = MINIMAL.replace(
            "\"upper\": [1]}",
            "\"upper\": [1], \"rows\": [{\"u\": [1], \"x\": [1], \"rhs\": -1}]}",
        );
        let err = SocProblem::from_json_str(&doc).unwrap_err();
        assert!(matches!(err, ModelError::EmptyControlSet { stage: 0 }), "{err}");
    }

    #[test]
    fn cost_subgradient_and_bounds() {
        let c = Cost(vec![CostTerm::new(vec![
            AffinePiece::new(vec![1.0], vec![0.0], 0.0),
            AffinePiece::new(vec![-1.0], vec![0.0], 2.0),
        ])]);
        assert_eq!(c.eval(&[0.5], &[0.0]), 1.5);
        assert_eq!(c.subgrad_x(&[1.0], &[0.0]), vec![1.0]);
        assert_eq!(c.subgrad_x(&[1.5], &[0.0]), vec![1.0]);
        assert_eq!(c.subgrad_x(&[0.5], &[0.0]), vec![-1.0]);
        assert_eq!(c.lower_bound(&[(0.0, 2.0)], &[(0.0, 0.0)]), 0.0);
    }
}
