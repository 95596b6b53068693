use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use super::{
    invalid, AffinePiece, ControlRow, ControlSet, Cost, CostTerm, ModelError, Realization, SocProblem, Stage,
    FORMAT_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalUnit {
    pub capacity: f64,
    pub cost: f64,
}

/// Parameters of the stylized hydro-thermal scheduling instance.
///
/// Profiles (`demand`, `seasonality`) are cycled when shorter than the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HydroParams {
    pub reservoirs: usize,
    pub stages: usize,
    pub realizations: usize,
    pub demand: Vec<f64>,
    pub thermal: Vec<ThermalUnit>,
    /// Mean inflow per reservoir before seasonal scaling.
    pub inflow_mean: Vec<f64>,
    pub inflow_std: Vec<f64>,
    pub seasonality: Vec<f64>,
    pub max_release: Vec<f64>,
    pub max_spill: f64,
    pub initial_storage: Vec<f64>,
    pub deficit_penalty: f64,
    /// Terminal storage target per reservoir and the penalty per unit below it.
    pub terminal_target: Vec<f64>,
    pub terminal_penalty: f64,
    pub seed: u64,
}

impl Default for HydroParams {
    fn default() -> Self {
        Self {
            reservoirs: 4,
            stages: 12,
            realizations: 10,
            demand: vec![100.0, 105.0, 110.0, 105.0, 100.0, 95.0],
            thermal: vec![
                ThermalUnit { capacity: 25.0, cost: 40.0 },
                ThermalUnit { capacity: 25.0, cost: 80.0 },
                ThermalUnit { capacity: 30.0, cost: 160.0 },
            ],
            inflow_mean: vec![16.0, 12.0, 10.0, 8.0],
            inflow_std: vec![10.0, 8.0, 7.0, 6.0],
            seasonality: vec![1.4, 1.3, 1.1, 0.9, 0.7, 0.6, 0.6, 0.7, 0.9, 1.1, 1.3, 1.4],
            max_release: vec![40.0, 35.0, 30.0, 25.0],
            max_spill: 200.0,
            initial_storage: vec![60.0, 45.0, 35.0, 30.0],
            deficit_penalty: 1000.0,
            terminal_target: vec![60.0, 45.0, 35.0, 30.0],
            terminal_penalty: 120.0,
            seed: 7,
        }
    }
}

impl HydroParams {
    /// Defaults resized to `reservoirs` (per-reservoir vectors are cycled).
    pub fn with_reservoirs(mut self, r: usize) -> Self {
        let cyc = |v: &Vec<f64>| (0..r).map(|i| v[i % v.len()]).collect::<Vec<_>>();
        self.inflow_mean = cyc(&self.inflow_mean);
        self.inflow_std = cyc(&self.inflow_std);
        self.max_release = cyc(&self.max_release);
        self.initial_storage = cyc(&self.initial_storage);
        self.terminal_target = cyc(&self.terminal_target);
        self.reservoirs = r;
        self
    }

    fn validate(&self) -> Result<(), ModelError> {
        let r = self.reservoirs;
        if r == 0 || self.stages == 0 || self.realizations == 0 {
            return Err(invalid("params", "reservoirs, stages and realizations must be >= 1"));
        }
        for (name, v) in [
            ("inflow_mean", &self.inflow_mean),
            ("inflow_std", &self.inflow_std),
            ("max_release", &self.max_release),
            ("initial_storage", &self.initial_storage),
            ("terminal_target", &self.terminal_target),
        ] {
            if v.len() != r {
                return Err(ModelError::Dimension {
                    path: format!("params.{name}"),
                    expected: r,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(invalid(format!("params.{name}"), "entries must be finite and >= 0"));
            }
        }
        for i in 0..r {
            if self.inflow_mean[i] > 0.0 && !(self.inflow_std[i] > 0.0) {
                return Err(invalid(
                    format!("params.inflow_std[{i}]"),
                    "lognormal inflows need a positive standard deviation",
                ));
            }
        }
        if self.demand.is_empty() || self.demand.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(invalid("params.demand", "need a nonempty profile of nonnegative demands"));
        }
        if self.seasonality.is_empty() || self.seasonality.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(invalid("params.seasonality", "need a nonempty nonnegative profile"));
        }
        if self.thermal.iter().any(|u| !(u.capacity >= 0.0) || !u.cost.is_finite()) {
            return Err(invalid("params.thermal", "capacities must be >= 0 and costs finite"));
        }
        for (name, v) in [
            ("deficit_penalty", self.deficit_penalty),
            ("terminal_penalty", self.terminal_penalty),
            ("max_spill", self.max_spill),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("params.{name}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Equal-probability atoms of a lognormal with the given mean and standard
/// deviation, placed at the quantile midpoints `(i − 0.5)/n`.
pub(crate) fn lognormal_atoms(mean: f64, std: f64, n: usize) -> Result<Vec<f64>, ModelError> {
    if mean == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if !(mean > 0.0) || !(std > 0.0) {
        return Err(invalid("inflow", format!("invalid lognormal moments mean {mean}, std {std}")));
    }
    let sigma2 = (1.0 + (std / mean).powi(2)).ln();
    let mu = mean.ln() - 0.5 * sigma2;
    let dist = LogNormal::new(mu, sigma2.sqrt()).map_err(|e| invalid("inflow", e.to_string()))?;
    Ok((1..=n)
        .map(|i| dist.inverse_cdf((i as f64 - 0.5) / n as f64))
        .collect())
}

/// Builds the hydro-thermal instance.
///
/// State: stored energy per reservoir. Controls, in order: release per
/// reservoir, generation per thermal unit, spill per reservoir, deficit.
pub fn generate_hydrothermal(params: &HydroParams) -> Result<SocProblem, ModelError> {
    params.validate()?;
    let r = params.reservoirs;
    let k = params.thermal.len();
    let m = 2 * r + k + 1;
    let (rel, th, sp, def) = (0, r, r + k, 2 * r + k);
    let n = params.stages;
    let big_n = params.realizations;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut base_atoms = Vec::with_capacity(r);
    let mut perms = Vec::with_capacity(r);
    for i in 0..r {
        base_atoms.push(lognormal_atoms(params.inflow_mean[i], params.inflow_std[i], big_n)?);
    }
    let mut stage_data = Vec::with_capacity(n);
    for t in 0..n {
        let season = params.seasonality[t % params.seasonality.len()];
        let demand = params.demand[t % params.demand.len()];
        perms.clear();
        for _ in 0..r {
            let mut p: Vec<usize> = (0..big_n).collect();
            p.shuffle(&mut rng);
            perms.push(p);
        }

        let mut lower = vec![Some(0.0); m];
        let mut upper = vec![None; m];
        for i in 0..r {
            upper[rel + i] = Some(params.max_release[i]);
            upper[sp + i] = Some(params.max_spill);
        }
        for (q, unit) in params.thermal.iter().enumerate() {
            upper[th + q] = Some(unit.capacity);
        }
        upper[def] = Some(demand);
        lower[def] = Some(0.0);

        let mut rows = Vec::with_capacity(r + 1);
        for i in 0..r {
            let mut u = vec![0.0; m];
            u[rel + i] = 1.0;
            u[sp + i] = 1.0;
            let mut x = vec![0.0; r];
            x[i] = -1.0;
            rows.push(ControlRow { u, x, rhs: 0.0 });
        }
        let mut u = vec![0.0; m];
        for v in u[rel..rel + r].iter_mut() {
            *v = -1.0;
        }
        for v in u[th..th + k].iter_mut() {
            *v = -1.0;
        }
        u[def] = -1.0;
        rows.push(ControlRow {
            u,
            x: vec![0.0; r],
            rhs: -demand,
        });

        let mut cost_u = vec![0.0; m];
        for (q, unit) in params.thermal.iter().enumerate() {
            cost_u[th + q] = unit.cost;
        }
        cost_u[def] = params.deficit_penalty;
        let cost = Cost(vec![CostTerm::affine(AffinePiece::new(vec![0.0; r], cost_u, 0.0))]);

        let mut a = vec![vec![0.0; r]; r];
        let mut b_mat = vec![vec![0.0; m]; r];
        for i in 0..r {
            a[i][i] = 1.0;
            b_mat[i][rel + i] = -1.0;
            b_mat[i][sp + i] = -1.0;
        }
        let realizations = (0..big_n)
            .map(|j| Realization {
                prob: 1.0 / big_n as f64,
                a: a.clone(),
                b_mat: b_mat.clone(),
                b: (0..r).map(|i| season * base_atoms[i][perms[i][j]]).collect(),
                cost: cost.clone(),
            })
            .collect();
        stage_data.push(Stage {
            control_set: ControlSet { lower, upper, rows },
            realizations,
        });
    }

    let terminal_cost = Cost(
        (0..r)
            .map(|i| {
                let mut x = vec![0.0; r];
                x[i] = -params.terminal_penalty;
                CostTerm::new(vec![
                    AffinePiece::constant(0.0),
                    AffinePiece::new(x, Vec::new(), params.terminal_penalty * params.terminal_target[i]),
                ])
            })
            .collect(),
    );

    let mut problem = SocProblem {
        version: FORMAT_VERSION,
        stages: n,
        state_dims: vec![r; n + 1],
        control_dims: vec![m; n],
        stage_data,
        terminal_cost,
        initial_state: params.initial_storage.clone(),
        risk_measure: None,
    };
    problem.validate()?;
    Ok(problem)
}
