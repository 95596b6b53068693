use super::{LinearProgram, LpError, Row, RowKind};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const VERIFY_TOL: f64 = 1e-6;
/// Relative size of a reduced cost below which an improving ray is treated as noise.
const RAY_TOL: f64 = 1e-7;
/// Degenerate pivots tolerated under Dantzig pricing before switching to Bland.
const DEGENERATE_SWITCH: usize = 50;

/// `x = offset + sign·y[pos] − y[neg]`
#[derive(Debug, Clone)]
struct ColMap {
    pos: usize,
    neg: Option<usize>,
    sign: f64,
    offset: f64,
}

/// Slack bookkeeping for one original row.
#[derive(Debug, Clone, Copy)]
struct RowSlack {
    col: usize,
    /// +1 for `≤`, −1 for `≥`.
    kappa: f64,
}

/// An optimal dense tableau, kept so that rows can be appended and re-solved
/// with the dual simplex.
#[derive(Debug, Clone)]
pub struct Simplex {
    lp: LinearProgram,
    map: Vec<ColMap>,
    n_struct: usize,
    a: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    neg_obj: f64,
    cost_scale: f64,
    basis: Vec<usize>,
    blocked: Vec<bool>,
    slacks: Vec<Option<RowSlack>>,
    x: Vec<f64>,
    objective: f64,
    iterations: usize,
}

impl Simplex {
    pub fn solve(lp: LinearProgram) -> Result<Self, LpError> {
        lp.validate()?;
        let mut s = Self::build(lp);
        s.run_two_phase()?;
        s.extract_and_verify()?;
        Ok(s)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn program(&self) -> &LinearProgram {
        &self.lp
    }

    /// Total pivots performed since the last cold start.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Sensitivity `∂ objective / ∂ rhs` of an inequality row; `None` for equalities.
    pub fn row_dual(&self, row: usize) -> Option<f64> {
        let s = self.slacks.get(row).copied().flatten()?;
        let d = self.d[s.col];
        let v = -d / s.kappa;
        Some(if v == 0.0 { 0.0 } else { v })
    }

    /// Appends an inequality row and restores optimality.
    pub fn add_row(&mut self, row: Row) -> Result<(), LpError> {
        if row.kind == RowKind::Eq {
            return Err(LpError::Invalid("equality rows cannot be appended".into()));
        }
        let n = self.lp.num_vars();
        if !row.rhs.is_finite() || row.coefs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
            return Err(LpError::Invalid("appended row has bad coefficients".into()));
        }
        self.lp.rows.push(row.clone());
        match self.append_and_resolve(&row) {
            Ok(()) => Ok(()),
            Err(_) => {
                // Rebuild from scratch; this also confirms genuine infeasibility.
                let lp = std::mem::replace(&mut self.lp, LinearProgram::new(0));
                *self = Self::solve(lp)?;
                Ok(())
            }
        }
    }

    fn append_and_resolve(&mut self, row: &Row) -> Result<(), LpError> {
        let (coefs, rhs) = self.transform(row);
        let kappa = if row.kind == RowKind::Le { 1.0 } else { -1.0 };
        let slack = self.push_column();
        let mut new_row = vec![0.0; self.d.len()];
        for (j, v) in coefs.iter().enumerate() {
            new_row[j] = kappa * v;
        }
        new_row[slack] = 1.0;
        let mut new_rhs = kappa * rhs;
        for i in 0..self.a.len() {
            let f = new_row[self.basis[i]];
            if f != 0.0 {
                for (v, a) in new_row.iter_mut().zip(&self.a[i]) {
                    *v -= f * a;
                }
                new_rhs -= f * self.rhs[i];
                new_row[self.basis[i]] = 0.0;
            }
        }
        self.a.push(new_row);
        self.rhs.push(new_rhs);
        self.basis.push(slack);
        self.slacks.push(Some(RowSlack { col: slack, kappa }));
        self.dual_simplex()?;
        self.primal(false)?;
        self.extract_and_verify()
    }

    fn build(lp: LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut map = Vec::with_capacity(n);
        let mut n_struct = 0;
        let mut bound_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            let pos = n_struct;
            n_struct += 1;
            if l.is_finite() {
                map.push(ColMap { pos, neg: None, sign: 1.0, offset: l });
                if u.is_finite() {
                    bound_rows.push((pos, u - l));
                }
            } else if u.is_finite() {
                map.push(ColMap { pos, neg: None, sign: -1.0, offset: u });
            } else {
                map.push(ColMap { pos, neg: Some(n_struct), sign: 1.0, offset: 0.0 });
                n_struct += 1;
            }
        }

        // (y-coefficients, kind, rhs, original row index)
        let mut rows: Vec<(Vec<f64>, RowKind, f64, Option<usize>)> = Vec::new();
        let mut s = Self {
            lp,
            map,
            n_struct,
            a: Vec::new(),
            rhs: Vec::new(),
            d: Vec::new(),
            neg_obj: 0.0,
            cost_scale: 1.0,
            basis: Vec::new(),
            blocked: Vec::new(),
            slacks: Vec::new(),
            x: Vec::new(),
            objective: 0.0,
            iterations: 0,
        };
        for (i, r) in s.lp.rows.iter().enumerate() {
            let (c, b) = s.transform(r);
            rows.push((c, r.kind, b, Some(i)));
        }
        for (pos, cap) in bound_rows {
            let mut c = vec![0.0; n_struct];
            c[pos] = 1.0;
            rows.push((c, RowKind::Le, cap, None));
        }

        let n_slack = rows.iter().filter(|r| r.1 != RowKind::Eq).count();
        let mut ncols = n_struct + n_slack;
        let mut next_slack = n_struct;
        let mut needs_art = Vec::new();
        s.slacks = vec![None; s.lp.rows.len()];
        for (coefs, kind, b, orig) in rows {
            let mut row = coefs;
            row.resize(n_struct + n_slack, 0.0);
            let mut slack_col = None;
            if kind != RowKind::Eq {
                let kappa = if kind == RowKind::Le { 1.0 } else { -1.0 };
                row[next_slack] = kappa;
                slack_col = Some(next_slack);
                if let Some(o) = orig {
                    s.slacks[o] = Some(RowSlack { col: next_slack, kappa });
                }
                next_slack += 1;
            }
            let mut rhs = b;
            if rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            let basic = slack_col.filter(|&c| row[c] == 1.0);
            s.a.push(row);
            s.rhs.push(rhs);
            match basic {
                Some(c) => s.basis.push(c),
                None => {
                    s.basis.push(usize::MAX);
                    needs_art.push(s.a.len() - 1);
                }
            }
        }
        for &i in &needs_art {
            for row in s.a.iter_mut() {
                row.push(0.0);
            }
            s.a[i][ncols] = 1.0;
            s.basis[i] = ncols;
            ncols += 1;
        }
        s.blocked = vec![false; ncols];
        s.d = vec![0.0; ncols];
        s
    }

    /// Row coefficients in the internal variables and the shifted rhs.
    fn transform(&self, row: &Row) -> (Vec<f64>, f64) {
        let mut c = vec![0.0; self.n_struct];
        let mut rhs = row.rhs;
        for &(j, v) in &row.coefs {
            let m = &self.map[j];
            c[m.pos] += m.sign * v;
            if let Some(neg) = m.neg {
                c[neg] -= v;
            }
            rhs -= v * m.offset;
        }
        (c, rhs)
    }

    fn push_column(&mut self) -> usize {
        for row in self.a.iter_mut() {
            row.push(0.0);
        }
        self.d.push(0.0);
        self.blocked.push(false);
        self.d.len() - 1
    }

    fn internal_costs(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.d.len()];
        for (j, m) in self.map.iter().enumerate() {
            let cj = self.lp.objective[j];
            c[m.pos] += m.sign * cj;
            if let Some(neg) = m.neg {
                c[neg] -= cj;
            }
        }
        c
    }

    fn price(&mut self, costs: &[f64]) {
        self.d.copy_from_slice(costs);
        self.neg_obj = 0.0;
        self.cost_scale = 1.0 + costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for i in 0..self.a.len() {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for (dj, aij) in self.d.iter_mut().zip(&self.a[i]) {
                    *dj -= cb * aij;
                }
                self.neg_obj -= cb * self.rhs[i];
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn run_two_phase(&mut self) -> Result<(), LpError> {
        let first_art = self.n_struct + self.lp.rows.iter().filter(|r| r.kind != RowKind::Eq).count()
            + self.bound_row_count();
        let ncols = self.d.len();
        if first_art < ncols {
            let mut costs = vec![0.0; ncols];
            costs[first_art..].iter_mut().for_each(|c| *c = 1.0);
            self.price(&costs);
            self.primal(false)?;
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if -self.neg_obj > 1e-8 * scale {
                return Err(LpError::Infeasible);
            }
            for i in 0..self.a.len() {
                if self.basis[i] < first_art {
                    continue;
                }
                let best = (0..first_art)
                    .filter(|&j| self.a[i][j].abs() > PIVOT_TOL)
                    .max_by(|&p, &q| self.a[i][p].abs().total_cmp(&self.a[i][q].abs()).then(q.cmp(&p)));
                if let Some(j) = best {
                    self.pivot(i, j);
                }
                // otherwise the row is redundant; its artificial stays basic at zero
            }
            for j in first_art..ncols {
                self.blocked[j] = true;
            }
            for r in self.rhs.iter_mut() {
                if *r < 0.0 && *r > -FEAS_TOL {
                    *r = 0.0;
                }
            }
        }
        let costs = self.internal_costs();
        self.price(&costs);
        self.primal(false)
    }

    fn bound_row_count(&self) -> usize {
        (0..self.lp.num_vars())
            .filter(|&j| self.lp.lower[j].is_finite() && self.lp.upper[j].is_finite())
            .count()
    }

    fn iteration_limit(&self) -> usize {
        20_000 + 50 * (self.a.len() + self.d.len())
    }

    fn pivot(&mut self, r: usize, c: usize) {
        self.iterations += 1;
        let p = self.a[r][c];
        let mut prow = std::mem::take(&mut self.a[r]);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[c] = 1.0;
        let prhs = self.rhs[r] / p;
        for i in 0..self.a.len() {
            if i == r {
                continue;
            }
            let f = self.a[i][c];
            if f != 0.0 {
                for (v, pv) in self.a[i].iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                self.a[i][c] = 0.0;
                self.rhs[i] -= f * prhs;
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.d[c] = 0.0;
            self.neg_obj -= f * prhs;
        }
        self.a[r] = prow;
        self.rhs[r] = prhs;
        self.basis[r] = c;
    }

    fn primal(&mut self, mut bland: bool) -> Result<(), LpError> {
        let limit = self.iteration_limit();
        let mut steps = 0;
        let mut degenerate = 0;
        loop {
            steps += 1;
            if steps > limit {
                return Err(LpError::IterationLimit(limit));
            }
            let mut enter = None;
            let mut best = -OPT_TOL;
            for (j, &dj) in self.d.iter().enumerate() {
                if self.blocked[j] || dj >= best {
                    continue;
                }
                enter = Some(j);
                if bland {
                    break;
                }
                best = dj;
            }
            let Some(c) = enter else { return Ok(()) };

            let leave = if bland { self.bland_row(c) } else { self.harris_row(c) };
            let Some((r, ratio)) = leave else {
                // A ray that fails the check against the original data is an
                // artefact of round-off in the tableau.
                if self.is_improving_ray(c) {
                    return Err(LpError::Unbounded);
                }
                self.d[c] = 0.0;
                continue;
            };
            if ratio <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_SWITCH {
                    bland = true;
                }
            }
            self.pivot(r, c);
        }
    }

    /// Checks the edge direction of column `c` against the original rows,
    /// bounds and objective.
    fn is_improving_ray(&self, c: usize) -> bool {
        if self.d[c] > -RAY_TOL * self.cost_scale {
            return false;
        }
        let mut dy = vec![0.0; self.n_struct];
        if c < self.n_struct {
            dy[c] = 1.0;
        }
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                dy[b] = -self.a[i][c];
            }
        }
        let dx: Vec<f64> = self.map.iter().map(|m| m.sign * dy[m.pos] - m.neg.map_or(0.0, |k| dy[k])).collect();
        let size = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if size == 0.0 {
            return false;
        }
        let tol = RAY_TOL * size;
        for (j, &v) in dx.iter().enumerate() {
            if (self.lp.upper[j].is_finite() && v > tol) || (self.lp.lower[j].is_finite() && v < -tol) {
                return false;
            }
        }
        for r in &self.lp.rows {
            let act: f64 = r.coefs.iter().map(|&(j, a)| a * dx[j]).sum();
            let mag = size * r.coefs.iter().map(|&(_, a)| a.abs()).sum::<f64>();
            let ok = match r.kind {
                RowKind::Le => act <= RAY_TOL * mag,
                RowKind::Ge => act >= -RAY_TOL * mag,
                RowKind::Eq => act.abs() <= RAY_TOL * mag,
            };
            if !ok {
                return false;
            }
        }
        let gain: f64 = self.lp.objective.iter().zip(&dx).map(|(c, v)| c * v).sum();
        gain < -RAY_TOL * size * self.cost_scale
    }

    /// Leaving row by the minimum ratio, ties to the lowest basic index.
    fn bland_row(&self, c: usize) -> Option<(usize, f64)> {
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.a.len() {
            let aic = self.a[i][c];
            if aic <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs[i].max(0.0) / aic;
            leave = match leave {
                None => Some((i, ratio)),
                Some((k, rk)) => {
                    let tie = (ratio - rk).abs() <= 1e-12 * (1.0 + rk.abs());
                    if (!tie && ratio < rk) || (tie && self.basis[i] < self.basis[k]) {
                        Some((i, ratio))
                    } else {
                        Some((k, rk))
                    }
                }
            };
        }
        leave
    }

    /// Two-pass (Harris) ratio test: the largest pivot among rows whose ratio
    /// is within the feasibility tolerance of the minimum.
    fn harris_row(&self, c: usize) -> Option<(usize, f64)> {
        let col_max = self.a.iter().fold(0.0f64, |m, r| m.max(r[c].abs()));
        let tol = PIVOT_TOL * col_max.max(1.0);
        let mut bound = f64::INFINITY;
        for i in 0..self.a.len() {
            let aic = self.a[i][c];
            if aic > tol {
                bound = bound.min((self.rhs[i].max(0.0) + FEAS_TOL) / aic);
            }
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.a.len() {
            let aic = self.a[i][c];
            if aic <= tol {
                continue;
            }
            let ratio = self.rhs[i].max(0.0) / aic;
            if ratio <= bound && leave.is_none_or(|(k, _)| aic > self.a[k][c]) {
                leave = Some((i, ratio));
            }
        }
        leave
    }

    /// Entering column of the dual simplex for leaving row `r`, by the same
    /// two-pass rule on reduced costs.
    fn harris_col(&self, r: usize) -> Option<(usize, f64)> {
        let row = &self.a[r];
        let row_max = row.iter().enumerate().filter(|&(j, _)| !self.blocked[j]).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        let tol = PIVOT_TOL * row_max.max(1.0);
        let mut bound = f64::INFINITY;
        for (j, &arj) in row.iter().enumerate() {
            if !self.blocked[j] && arj < -tol {
                bound = bound.min((self.d[j].max(0.0) + OPT_TOL) / -arj);
            }
        }
        let mut enter: Option<(usize, f64)> = None;
        for (j, &arj) in row.iter().enumerate() {
            if self.blocked[j] || arj >= -tol {
                continue;
            }
            let ratio = self.d[j].max(0.0) / -arj;
            if ratio <= bound && enter.is_none_or(|(k, _)| -arj > -row[k]) {
                enter = Some((j, ratio));
            }
        }
        enter
    }

    fn dual_simplex(&mut self) -> Result<(), LpError> {
        let limit = self.iteration_limit();
        for _ in 0..limit {
            let mut leave = None;
            let mut worst = -FEAS_TOL;
            for (i, &b) in self.rhs.iter().enumerate() {
                if b < worst {
                    worst = b;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else { return Ok(()) };
            let enter = self.harris_col(r);
            let Some((c, _)) = enter else { return Err(LpError::Infeasible) };
            self.pivot(r, c);
        }
        Err(LpError::IterationLimit(limit))
    }

    fn extract_and_verify(&mut self) -> Result<(), LpError> {
        let mut y = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                y[b] = self.rhs[i].max(0.0);
            }
        }
        self.x = self
            .map
            .iter()
            .map(|m| m.offset + m.sign * y[m.pos] - m.neg.map_or(0.0, |k| y[k]))
            .collect();
        // Elimination round-off can push a variable just past its bound.
        for (j, v) in self.x.iter_mut().enumerate() {
            *v = v.clamp(self.lp.lower[j], self.lp.upper[j]);
        }
        let viol = self.lp.max_violation(&self.x);
        if !(viol <= VERIFY_TOL) {
            return Err(LpError::Numerical(format!("solution violates constraints by {viol:e}")));
        }
        self.objective = self.lp.eval_objective(&self.x);
        Ok(())
    }
}
