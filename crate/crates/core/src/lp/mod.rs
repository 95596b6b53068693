//! Small dense linear programs: `min cᵀx` subject to linear rows and variable bounds.
//!
//! The solver is a two-phase primal simplex on a dense tableau with a dual
//! simplex warm start for rows appended after the first solve. It targets the
//! stage problems of this crate (tens to a few hundred variables and rows).

mod simplex;

pub use simplex::Simplex;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("numerical trouble: {0}")]
    Numerical(String),
    #[error("invalid linear program: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// `aᵀx ≤ b`
    Le,
    /// `aᵀx ≥ b`
    Ge,
    /// `aᵀx = b`
    Eq,
}

/// A sparse linear row `Σ coef·x[var] (kind) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub kind: RowKind,
    pub rhs: f64,
}

impl Row {
    pub fn new(coefs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> Self {
        Self { coefs, kind, rhs }
    }

    pub fn le(coefs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coefs, RowKind::Le, rhs)
    }

    pub fn ge(coefs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coefs, RowKind::Ge, rhs)
    }

    pub fn eq(coefs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self::new(coefs, RowKind::Eq, rhs)
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// `min cᵀx` over `lower ≤ x ≤ upper` and the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LinearProgram {
    /// `n` variables, zero objective, `x ≥ 0`.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_row(&mut self, row: Row) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Invalid("bound vectors do not match objective length".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(LpError::Invalid(format!("objective coefficient {j} is not finite")));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(LpError::Invalid(format!(
                    "bounds [{}, {}] of variable {j}",
                    self.lower[j], self.upper[j]
                )));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(LpError::Invalid(format!("variable {j} has an empty domain")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::Invalid(format!("row {i} has non-finite rhs")));
            }
            if r.coefs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(LpError::Invalid(format!("row {i} has a bad coefficient")));
            }
        }
        Ok(())
    }

    /// Largest violation of rows and bounds at `x`, each row scaled by the size of its terms.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((&xj, &lo), &up) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max((lo - xj) / (1.0 + lo.abs().min(1e300)));
            worst = worst.max((xj - up) / (1.0 + up.abs().min(1e300)));
        }
        for r in &self.rows {
            let act = r.activity(x);
            let v = match r.kind {
                RowKind::Le => act - r.rhs,
                RowKind::Ge => r.rhs - act,
                RowKind::Eq => (act - r.rhs).abs(),
            };
            let scale: f64 = r.coefs.iter().map(|&(j, a)| (a * x[j]).abs()).sum();
            worst = worst.max(v / (1.0 + r.rhs.abs() + scale));
        }
        worst
    }

    pub fn eval_objective(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Solve from scratch.
    pub fn solve(&self) -> Result<Simplex, LpError> {
        Simplex::solve(self.clone())
    }
}
