//! Cut pools (piecewise-affine lower approximations of value functions) and
//! the risk-averse stage subproblem.

mod builder;
mod stage;

pub(crate) use builder::{Affine, ParamLp};
pub(crate) use stage::{add_max_term, add_mean_epigraph, add_tangent, risk_expr};
pub use stage::{solve_stage, CutRule, FutureCost, StageOptions, StageSolution};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::LpError;
use crate::risk::RiskError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("stage {stage}: subproblem infeasible at state {state:?}")]
    Infeasible { stage: usize, state: Vec<f64> },
    #[error("stage {stage}: subproblem unbounded (value function has no lower bound)")]
    Unbounded { stage: usize },
    #[error("stage {stage}: {source}")]
    Lp {
        stage: usize,
        #[source]
        source: LpError,
    },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("cut pool is empty")]
    EmptyPool,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl StageError {
    pub(crate) fn from_lp(stage: usize, state: &[f64], e: LpError) -> Self {
        match e {
            LpError::Infeasible => StageError::Infeasible {
                stage,
                state: state.to_vec(),
            },
            LpError::Unbounded => StageError::Unbounded { stage },
            source => StageError::Lp { stage, source },
        }
    }
}

/// `ℓ(x) = aᵀx + h`, generated at iteration `born`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cut {
    pub stage: usize,
    pub a: Vec<f64>,
    pub h: f64,
    #[serde(default)]
    pub born: usize,
}

impl Cut {
    /// The cut `v + gᵀ(x − x̂)`.
    pub fn at_point(stage: usize, value: f64, gradient: Vec<f64>, point: &[f64], born: usize) -> Self {
        let h = value - crate::model::dot(&gradient, point);
        Self {
            stage,
            a: gradient,
            h,
            born,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        crate::model::dot(&self.a, x) + self.h
    }
}

/// `V̲(x) = max_i aᵢᵀx + hᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineVF {
    pub stage: usize,
    pub dim: usize,
    cuts: Vec<Cut>,
    #[serde(skip)]
    last_active: Vec<usize>,
}

impl PiecewiseAffineVF {
    pub fn new(stage: usize, dim: usize) -> Self {
        Self {
            stage,
            dim,
            cuts: Vec::new(),
            last_active: Vec::new(),
        }
    }

    /// A pool holding the constant cut `lower` (when finite).
    pub fn with_lower_bound(stage: usize, dim: usize, lower: f64) -> Self {
        let mut vf = Self::new(stage, dim);
        if lower.is_finite() {
            vf.push(Cut {
                stage,
                a: vec![0.0; dim],
                h: lower,
                born: 0,
            });
        }
        vf
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Appends a cut; non-finite cuts are rejected.
    pub fn add_cut(&mut self, cut: Cut) -> Result<(), StageError> {
        if cut.a.len() != self.dim {
            return Err(StageError::Dimension {
                expected: self.dim,
                found: cut.a.len(),
            });
        }
        if !cut.h.is_finite() || cut.a.iter().any(|v| !v.is_finite()) {
            return Err(StageError::Unsupported("non-finite cut coefficients".into()));
        }
        self.push(cut);
        Ok(())
    }

    fn push(&mut self, cut: Cut) {
        self.last_active.push(cut.born);
        self.cuts.push(cut);
    }

    /// `max_i ℓ_i(x)`, `-inf` for an empty pool.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.cuts.iter().map(|c| c.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value and index of the first cut attaining the max.
    pub fn argmax(&self, x: &[f64]) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in self.cuts.iter().enumerate() {
            let v = c.eval(x);
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
        best
    }

    /// Gradient of an active cut (lowest index on ties) and its index.
    pub fn subgrad(&self, x: &[f64]) -> Result<(Vec<f64>, usize), StageError> {
        let (_, i) = self.argmax(x).ok_or(StageError::EmptyPool)?;
        Ok((self.cuts[i].a.clone(), i))
    }

    /// Largest constant cut, a global lower bound of the pool.
    pub fn constant_floor(&self) -> Option<f64> {
        self.cuts
            .iter()
            .filter(|c| c.a.iter().all(|v| *v == 0.0))
            .map(|c| c.h)
            .fold(None, |m, h| Some(m.map_or(h, |m: f64| m.max(h))))
    }

    /// Marks the cut active at `x` as used at `iteration`.
    pub fn record_activity(&mut self, x: &[f64], iteration: usize) {
        if let Some((_, i)) = self.argmax(x) {
            self.last_active[i] = self.last_active[i].max(iteration);
        }
    }

    /// Drops cuts not active at any recorded point during the last `window`
    /// iterations. The first cut (initialization) is always kept.
    pub fn prune(&mut self, iteration: usize, window: usize) -> usize {
        let before = self.cuts.len();
        let mut keep = Vec::with_capacity(before);
        for (i, last) in self.last_active.iter().enumerate() {
            keep.push(i == 0 || last + window >= iteration);
        }
        let mut k = keep.iter();
        self.cuts.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.last_active.retain(|_| *k.next().unwrap());
        before - self.cuts.len()
    }

    /// Restores activity bookkeeping after deserialization.
    pub fn reset_activity(&mut self) {
        self.last_active = self.cuts.iter().map(|c| c.born).collect();
    }
}
