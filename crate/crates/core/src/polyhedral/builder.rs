use crate::lp::{LinearProgram, LpError, Row, Simplex};

/// `Σ coef·var + xᵀ·x̂ + c`: an affine expression in LP variables and a state parameter.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Affine {
    pub vars: Vec<(usize, f64)>,
    pub x: Vec<f64>,
    pub c: f64,
}

impl Affine {
    pub fn zero(n: usize) -> Self {
        Self {
            vars: Vec::new(),
            x: vec![0.0; n],
            c: 0.0,
        }
    }

    pub fn var(n: usize, j: usize, coef: f64) -> Self {
        let mut e = Self::zero(n);
        e.vars.push((j, coef));
        e
    }

    pub fn add(&mut self, other: &Affine, scale: f64) {
        self.vars.extend(other.vars.iter().map(|&(j, a)| (j, a * scale)));
        for (p, q) in self.x.iter_mut().zip(&other.x) {
            *p += scale * q;
        }
        self.c += scale * other.c;
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut e = Self::zero(self.x.len());
        e.add(self, s);
        e
    }

    pub fn eval(&self, sol: &[f64], xhat: &[f64]) -> f64 {
        self.vars.iter().map(|&(j, a)| a * sol[j]).sum::<f64>() + crate::model::dot(&self.x, xhat) + self.c
    }
}

/// A linear program whose row right-hand sides and objective constant are
/// affine in a state parameter `x̂`, solved at a fixed `x̂`.
///
/// All rows have the form `expr ≤ 0`, so the optimal value's subgradient in
/// `x̂` is `obj_x − Σ_r dual_r · row_x_r`.
#[derive(Debug, Clone)]
pub(crate) struct ParamLp {
    pub lp: LinearProgram,
    pub xhat: Vec<f64>,
    row_x: Vec<Vec<f64>>,
    obj_x: Vec<f64>,
    obj_c: f64,
    solver: Option<Simplex>,
}

impl ParamLp {
    pub fn new(xhat: &[f64]) -> Self {
        Self {
            lp: LinearProgram::new(0),
            xhat: xhat.to_vec(),
            row_x: Vec::new(),
            obj_x: vec![0.0; xhat.len()],
            obj_c: 0.0,
            solver: None,
        }
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        assert!(self.solver.is_none(), "variables must be added before solving");
        self.lp.add_var(cost, lower, upper)
    }

    /// Adds `scale · e` to the objective.
    pub fn add_objective(&mut self, e: &Affine, scale: f64) {
        assert!(self.solver.is_none(), "objective is fixed once solved");
        for &(j, a) in &e.vars {
            self.lp.objective[j] += scale * a;
        }
        for (p, q) in self.obj_x.iter_mut().zip(&e.x) {
            *p += scale * q;
        }
        self.obj_c += scale * e.c;
    }

    /// Adds the row `e ≤ 0`; re-optimizes if already solved.
    pub fn add_le(&mut self, e: &Affine) -> Result<(), LpError> {
        let rhs = -(crate::model::dot(&e.x, &self.xhat) + e.c);
        let row = Row::le(e.vars.clone(), rhs);
        self.row_x.push(e.x.clone());
        match &mut self.solver {
            Some(s) => s.add_row(row),
            None => {
                self.lp.add_row(row);
                Ok(())
            }
        }
    }

    pub fn solve(&mut self) -> Result<(), LpError> {
        if self.solver.is_none() {
            self.solver = Some(self.lp.solve()?);
        }
        Ok(())
    }

    fn solver(&self) -> &Simplex {
        self.solver.as_ref().expect("solve() first")
    }

    pub fn solution(&self) -> &[f64] {
        self.solver().x()
    }

    /// Optimal value including the state-dependent objective constant.
    pub fn value(&self) -> f64 {
        self.solver().objective() + crate::model::dot(&self.obj_x, &self.xhat) + self.obj_c
    }

    /// A subgradient of the optimal value with respect to `x̂`.
    pub fn value_gradient(&self) -> Vec<f64> {
        let s = self.solver();
        let mut g = self.obj_x.clone();
        for (r, rx) in self.row_x.iter().enumerate() {
            let d = s.row_dual(r).expect("all rows are inequalities");
            if d != 0.0 {
                for (gi, xi) in g.iter_mut().zip(rx) {
                    *gi -= d * xi;
                }
            }
        }
        g
    }
}
