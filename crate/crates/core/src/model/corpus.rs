//! Tiny instances small enough for exact scenario-tree computations.

use super::{
    AffinePiece, ControlRow, ControlSet, Cost, CostTerm, Realization, SocProblem, Stage, FORMAT_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TinyFamily {
    /// One product, order quantity control, random demand.
    Inventory1,
    /// Two perishable products sharing an order capacity.
    Inventory2,
    /// One reservoir with a thermal backup; release limited by storage.
    Reservoir,
}

impl TinyFamily {
    pub const ALL: [TinyFamily; 3] = [TinyFamily::Inventory1, TinyFamily::Inventory2, TinyFamily::Reservoir];

    pub fn name(self) -> &'static str {
        match self {
            TinyFamily::Inventory1 => "inventory1",
            TinyFamily::Inventory2 => "inventory2",
            TinyFamily::Reservoir => "reservoir",
        }
    }
}

fn probs(n: usize) -> Vec<f64> {
    match n {
        1 => vec![1.0],
        2 => vec![0.4, 0.6],
        3 => vec![0.2, 0.5, 0.3],
        _ => vec![1.0 / n as f64; n],
    }
}

/// `max(0, h·(x + u − d), b·(d − x − u))` for one product, plus its order cost.
fn newsvendor_terms(n: usize, m: usize, i: usize, d: f64, order: f64, hold: f64, back: f64) -> [CostTerm; 2] {
    let mut xh = vec![0.0; n];
    let mut uh = vec![0.0; m];
    xh[i] = hold;
    uh[i] = hold;
    let mut xb = vec![0.0; n];
    let mut ub = vec![0.0; m];
    xb[i] = -back;
    ub[i] = -back;
    let mut uo = vec![0.0; m];
    uo[i] = order;
    [
        CostTerm::new(vec![
            AffinePiece::constant(0.0),
            AffinePiece::new(xh, uh, -hold * d),
            AffinePiece::new(xb, ub, back * d),
        ]),
        CostTerm::affine(AffinePiece::new(vec![0.0; n], uo, 0.0)),
    ]
}

/// Builds one tiny instance with `stages ∈ {2, 3}` and `n_real ∈ {2, 3}`.
pub fn tiny_instance(family: TinyFamily, stages: usize, n_real: usize) -> SocProblem {
    let p = probs(n_real);
    let spread = |t: usize, j: usize| -> f64 {
        // distinct values per stage so trees are not symmetric
        let base = [0.4, 1.3, 2.1];
        base[j % 3] + 0.15 * t as f64
    };
    let (n, m) = match family {
        TinyFamily::Inventory1 => (1, 1),
        TinyFamily::Inventory2 => (2, 2),
        TinyFamily::Reservoir => (1, 2),
    };
    let mut stage_data = Vec::with_capacity(stages);
    for t in 0..stages {
        let (control_set, realizations) = match family {
            TinyFamily::Inventory1 => {
                let cs = ControlSet {
                    lower: vec![Some(0.0)],
                    upper: vec![Some(2.5)],
                    rows: Vec::new(),
                };
                let reals = (0..n_real)
                    .map(|j| {
                        let d = spread(t, j);
                        Realization {
                            prob: p[j],
                            a: vec![vec![1.0]],
                            b_mat: vec![vec![1.0]],
                            b: vec![-d],
                            cost: Cost(newsvendor_terms(1, 1, 0, d, 1.0, 0.5, 3.0).to_vec()),
                        }
                    })
                    .collect();
                (cs, reals)
            }
            TinyFamily::Inventory2 => {
                let cs = ControlSet {
                    lower: vec![Some(0.0); 2],
                    upper: vec![Some(2.0); 2],
                    rows: vec![ControlRow {
                        u: vec![1.0, 1.0],
                        x: vec![0.0, 0.0],
                        rhs: 3.0,
                    }],
                };
                let reals = (0..n_real)
                    .map(|j| {
                        let d1 = spread(t, j);
                        let d2 = spread(t, (j + 1) % n_real);
                        let keep = if j == 0 { 0.9 } else { 1.0 };
                        let mut cost = newsvendor_terms(2, 2, 0, d1, 1.0, 0.4, 2.5).to_vec();
                        cost.extend(newsvendor_terms(2, 2, 1, d2, 1.5, 0.6, 4.0));
                        Realization {
                            prob: p[j],
                            a: vec![vec![keep, 0.0], vec![0.0, keep]],
                            b_mat: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                            b: vec![-d1, -d2],
                            cost: Cost(cost),
                        }
                    })
                    .collect();
                (cs, reals)
            }
            TinyFamily::Reservoir => {
                let demand = 2.0;
                let cs = ControlSet {
                    lower: vec![Some(0.0), Some(0.0)],
                    upper: vec![Some(2.0), Some(3.0)],
                    rows: vec![
                        ControlRow {
                            u: vec![1.0, 0.0],
                            x: vec![-1.0],
                            rhs: 0.0,
                        },
                        ControlRow {
                            u: vec![-1.0, -1.0],
                            x: vec![0.0],
                            rhs: -demand,
                        },
                    ],
                };
                let reals = (0..n_real)
                    .map(|j| {
                        let inflow = 0.8 * spread(t, j);
                        let price = [1.0, 2.0, 4.0][(j + t) % 3];
                        Realization {
                            prob: p[j],
                            a: vec![vec![1.0]],
                            b_mat: vec![vec![-1.0, 0.0]],
                            b: vec![inflow],
                            cost: Cost(vec![CostTerm::affine(AffinePiece::new(vec![0.0], vec![0.0, price], 0.0))]),
                        }
                    })
                    .collect();
                (cs, reals)
            }
        };
        stage_data.push(Stage {
            control_set,
            realizations,
        });
    }

    let terminal_cost = match family {
        TinyFamily::Inventory1 => Cost(vec![CostTerm::new(vec![
            AffinePiece::constant(0.0),
            AffinePiece::new(vec![-2.0], Vec::new(), 0.0),
        ])]),
        TinyFamily::Inventory2 => Cost(vec![CostTerm::new(vec![
            AffinePiece::constant(0.0),
            AffinePiece::new(vec![-2.0, 0.0], Vec::new(), 0.0),
            AffinePiece::new(vec![0.0, -3.0], Vec::new(), 0.0),
        ])]),
        TinyFamily::Reservoir => Cost(vec![CostTerm::new(vec![
            AffinePiece::constant(0.0),
            AffinePiece::new(vec![-3.0], Vec::new(), 3.0),
        ])]),
    };
    let initial_state = match family {
        TinyFamily::Inventory1 => vec![0.5],
        TinyFamily::Inventory2 => vec![0.5, 0.2],
        TinyFamily::Reservoir => vec![1.0],
    };
    let mut problem = SocProblem {
        version: FORMAT_VERSION,
        stages,
        state_dims: vec![n; stages + 1],
        control_dims: vec![m; stages],
        stage_data,
        terminal_cost,
        initial_state,
        risk_measure: None,
    };
    problem.validate().expect("tiny instance is valid");
    problem
}

/// The 12 instances `{inventory1, inventory2, reservoir} × T ∈ {2, 3} × N ∈ {2, 3}`.
pub fn tiny_corpus() -> Vec<(String, SocProblem)> {
    let mut out = Vec::with_capacity(12);
    for family in TinyFamily::ALL {
        for stages in [2, 3] {
            for n_real in [2, 3] {
                out.push((
                    format!("{}-T{stages}-N{n_real}", family.name()),
                    tiny_instance(family, stages, n_real),
                ));
            }
        }
    }
    out
}
