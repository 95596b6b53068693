//! The training loop: forward simulation, backward cut generation, the
//! deterministic lower bound and periodic statistical upper bounds.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{derive_seed, sample_path, ModelError, SamplePath, SocProblem};
use crate::policy::{TrajectoryRecord, ValueFunctionPolicy};
use crate::polyhedral::{solve_stage, Cut, FutureCost, PiecewiseAffineVF, StageError, StageOptions, StageSolution};
use crate::risk::{RiskError, RiskMeasure};
use crate::ubound::{evaluate_policy, BoundError, EvalOptions, EvaluationResult};

/// Seed stream of the training forward paths.
pub const TRAIN_STREAM: u64 = 1;
/// Seed stream of the evaluation paths.
pub const EVAL_STREAM: u64 = 2;
/// Seed stream of the final evaluation after training.
pub const FINAL_STREAM: u64 = 3;

/// Base seed of the final evaluation of a run with `seed` stopped after `k` iterations.
pub fn final_eval_seed(seed: u64, k: usize) -> u64 {
    derive_seed(derive_seed(seed, FINAL_STREAM), k as u64)
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("iteration {iteration}, stage {stage}: {source}")]
    Stage {
        iteration: usize,
        stage: usize,
        #[source]
        source: StageError,
    },
    #[error("iteration {iteration}: evaluation failed: {source}")]
    Evaluation {
        iteration: usize,
        #[source]
        source: BoundError,
    },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("lower bound decreased at iteration {iteration}: {previous} -> {current}")]
    NonMonotone { iteration: usize, previous: f64, current: f64 },
    #[error("configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    /// Evaluate the policy every this many iterations (0 disables).
    pub eval_every: usize,
    pub eval_samples: usize,
    pub z: f64,
    pub threads: usize,
    /// Re-solve each stage in the backward pass against the already updated
    /// pool of the next stage instead of reusing the forward solutions.
    pub backward_resolve: bool,
    /// Forward paths per iteration.
    pub forward_paths: usize,
    /// Drop cuts inactive for this many iterations (checked every `window` iterations).
    pub prune_window: Option<usize>,
    /// Replaces the computed initial lower bounds `L_0, …, L_{T-1}`.
    pub lower_bounds: Option<Vec<f64>>,
    pub stage: StageOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            eval_every: 10,
            eval_samples: 10,
            z: 2.0,
            threads: 1,
            backward_resolve: false,
            forward_paths: 1,
            prune_window: None,
            lower_bounds: None,
            stage: StageOptions::default(),
        }
    }
}

/// One line of the bounds history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper_mean: Option<f64>,
    pub upper_std: Option<f64>,
    pub upper_bound: Option<f64>,
    #[serde(skip)]
    pub wall_time_ms: u128,
}

impl BoundsRow {
    /// `(U − L)/L`, when an upper bound is present.
    pub fn relative_gap(&self) -> Option<f64> {
        self.upper_bound.map(|u| relative_gap(self.lower_bound, u))
    }
}

pub fn relative_gap(lower: f64, upper: f64) -> f64 {
    (upper - lower) / lower
}

/// Writes the bounds history. Column order is fixed:
/// `iteration,lower_bound,upper_mean,upper_std,upper_bound`.
pub fn write_bounds_csv<W: Write>(writer: W, rows: &[BoundsRow]) -> Result<(), EngineError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["iteration", "lower_bound", "upper_mean", "upper_std", "upper_bound"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock times per iteration, kept apart so the bounds file is reproducible.
pub fn write_timing_csv<W: Write>(writer: W, rows: &[BoundsRow]) -> Result<(), EngineError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "wall_time_ms"])?;
    for r in rows {
        w.write_record([r.iteration.to_string(), r.wall_time_ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Cut pools and bookkeeping of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub iteration: usize,
    /// `V̲_0, …, V̲_{T-1}`; the terminal cost is used exactly after the last stage.
    pub vfs: Vec<PiecewiseAffineVF>,
    pub history: Vec<BoundsRow>,
    pub seed: u64,
}

impl TrainState {
    pub fn lower_bound(&self, problem: &SocProblem) -> f64 {
        self.vfs[0].eval(&problem.initial_state)
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub iteration: usize,
    pub cuts: Vec<Cut>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed: state.seed,
            iteration: state.iteration,
            cuts: state.vfs.iter().flat_map(|vf| vf.cuts().iter().cloned()).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EngineError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(EngineError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }

    /// Rebuilds the cut pools for `problem`.
    pub fn into_state(self, problem: &SocProblem) -> Result<TrainState, EngineError> {
        let t_count = problem.num_stages();
        let mut vfs: Vec<_> = (0..t_count)
            .map(|t| PiecewiseAffineVF::new(t, problem.state_dims[t]))
            .collect();
        for cut in self.cuts {
            let t = cut.stage;
            let vf = vfs
                .get_mut(t)
                .ok_or_else(|| EngineError::Checkpoint(format!("cut for stage {t} beyond horizon {t_count}")))?;
            vf.add_cut(cut).map_err(|e| EngineError::Checkpoint(e.to_string()))?;
        }
        if let Some(t) = vfs.iter().position(|vf| vf.is_empty()) {
            return Err(EngineError::Checkpoint(format!("no cuts for stage {t}")));
        }
        Ok(TrainState {
            iteration: self.iteration,
            vfs,
            history: Vec::new(),
            seed: self.seed,
        })
    }
}

/// Forward trajectory together with the stage solutions along it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub trajectory: TrajectoryRecord,
    pub solutions: Vec<StageSolution>,
}

fn future<'a>(vfs: &'a [PiecewiseAffineVF], t: usize) -> FutureCost<'a> {
    if t + 1 == vfs.len() {
        FutureCost::Terminal
    } else {
        FutureCost::Cuts(&vfs[t + 1])
    }
}

/// Solves the stage problems along `path` with the current pools.
pub fn forward_pass(
    problem: &SocProblem,
    vfs: &[PiecewiseAffineVF],
    measure: &RiskMeasure,
    path: &SamplePath,
    opts: &StageOptions,
) -> Result<ForwardPass, (usize, StageError)> {
    let t_count = problem.num_stages();
    let mut states = vec![problem.initial_state.clone()];
    let mut solutions = Vec::with_capacity(t_count);
    let mut costs = Vec::with_capacity(t_count + 1);
    for t in 0..t_count {
        let s = solve_stage(problem, t, &states[t], future(vfs, t), measure, opts).map_err(|e| (t, e))?;
        let j = path.indices[t];
        costs.push(s.stage_costs[j]);
        states.push(s.post_states[j].clone());
        solutions.push(s);
    }
    costs.push(problem.terminal_value(&states[t_count]));
    let trajectory = TrajectoryRecord {
        path: path.indices.clone(),
        controls: solutions.iter().map(|s| s.u.clone()).collect(),
        thetas: solutions.iter().map(|s| s.theta.clone()).collect(),
        states,
        costs,
        values: Vec::new(),
    };
    Ok(ForwardPass { trajectory, solutions })
}

/// Cuts for stages `T-1, …, 0` at the trial points of `fwd`, all built from the
/// pools the forward pass used.
pub fn backward_pass(fwd: &ForwardPass, opts: &StageOptions, born: usize) -> Vec<Cut> {
    (0..fwd.solutions.len())
        .rev()
        .map(|t| fwd.solutions[t].cut(t, &fwd.trajectory.states[t], opts.cut_rule, born))
        .collect()
}

/// Stateful training driver; each `step` runs one iteration.
pub struct Trainer<'a> {
    problem: &'a SocProblem,
    measure: RiskMeasure,
    opts: TrainOptions,
    state: TrainState,
    started: Instant,
}

impl<'a> Trainer<'a> {
    pub fn new(problem: &'a SocProblem, measure: RiskMeasure, opts: TrainOptions) -> Result<Self, EngineError> {
        measure.validate()?;
        let t_count = problem.num_stages();
        if t_count == 0 {
            return Err(EngineError::Config("problem has no stages".into()));
        }
        let lower = match &opts.lower_bounds {
            Some(l) if l.len() >= t_count => l.clone(),
            Some(l) => {
                return Err(EngineError::Config(format!(
                    "{} initial lower bounds given, {t_count} needed",
                    l.len()
                )))
            }
            None => problem.value_lower_bounds(&measure)?,
        };
        if let Some(t) = lower[..t_count].iter().position(|l| !l.is_finite()) {
            return Err(EngineError::Config(format!(
                "stage {t} has no finite cost lower bound; supply initial lower bounds"
            )));
        }
        let vfs = (0..t_count)
            .map(|t| PiecewiseAffineVF::with_lower_bound(t, problem.state_dims[t], lower[t]))
            .collect();
        let state = TrainState {
            iteration: 0,
            vfs,
            history: Vec::new(),
            seed: opts.seed,
        };
        Self::check(&opts)?;
        Ok(Self {
            problem,
            measure,
            opts,
            state,
            started: Instant::now(),
        })
    }

    /// Continues from a saved state.
    pub fn resume(
        problem: &'a SocProblem,
        measure: RiskMeasure,
        opts: TrainOptions,
        state: TrainState,
    ) -> Result<Self, EngineError> {
        measure.validate()?;
        Self::check(&opts)?;
        if state.vfs.len() != problem.num_stages() {
            return Err(EngineError::Checkpoint("stage count does not match the problem".into()));
        }
        let mut state = state;
        for vf in &mut state.vfs {
            vf.reset_activity();
        }
        Ok(Self {
            problem,
            measure,
            opts,
            state,
            started: Instant::now(),
        })
    }

    fn check(opts: &TrainOptions) -> Result<(), EngineError> {
        if opts.forward_paths == 0 {
            return Err(EngineError::Config("forward_paths must be positive".into()));
        }
        if opts.eval_every > 0 && opts.eval_samples == 0 {
            return Err(EngineError::Config("eval_samples must be positive".into()));
        }
        if !opts.z.is_finite() {
            return Err(EngineError::Config("z must be finite".into()));
        }
        Ok(())
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    pub fn lower_bound(&self) -> f64 {
        self.state.lower_bound(self.problem)
    }

    /// The policy induced by the current pools.
    pub fn policy(&self) -> ValueFunctionPolicy<'_> {
        let mut p = ValueFunctionPolicy::new(self.problem, &self.state.vfs, &self.measure);
        p.options = self.opts.stage.clone();
        p
    }

    /// Seed of forward path `i` of iteration `k`.
    pub fn train_seed(&self, k: usize, i: usize) -> u64 {
        let s = derive_seed(derive_seed(self.opts.seed, TRAIN_STREAM), k as u64);
        if i == 0 {
            s
        } else {
            derive_seed(s, i as u64)
        }
    }

    /// Base seed of the evaluation at iteration `k`.
    pub fn eval_seed(&self, k: usize) -> u64 {
        derive_seed(derive_seed(self.opts.seed, EVAL_STREAM), k as u64)
    }

    /// Runs one iteration and returns its bounds row. On error the pools are
    /// left as they were before the failing stage update.
    pub fn step(&mut self) -> Result<BoundsRow, EngineError> {
        let k = self.state.iteration + 1;
        let previous = self.lower_bound();
        for i in 0..self.opts.forward_paths {
            let path = sample_path(self.problem, self.train_seed(k, i));
            self.iterate(k, &path)?;
        }
        if let Some(w) = self.opts.prune_window {
            if w > 0 && k.is_multiple_of(w) {
                for vf in &mut self.state.vfs {
                    vf.prune(k, w);
                }
            }
        }
        let lower_bound = self.lower_bound();
        if self.opts.prune_window.is_none() && lower_bound < previous - 1e-9 * (1.0 + previous.abs()) {
            return Err(EngineError::NonMonotone {
                iteration: k,
                previous,
                current: lower_bound,
            });
        }
        self.state.iteration = k;
        let mut row = BoundsRow {
            iteration: k,
            lower_bound,
            upper_mean: None,
            upper_std: None,
            upper_bound: None,
            wall_time_ms: 0,
        };
        if self.opts.eval_every > 0 && k.is_multiple_of(self.opts.eval_every) {
            let r = self.evaluate(self.opts.eval_samples, self.eval_seed(k))
                .map_err(|source| EngineError::Evaluation { iteration: k, source })?;
            row.upper_mean = Some(r.mean);
            row.upper_std = Some(r.std);
            row.upper_bound = Some(r.bound);
        }
        row.wall_time_ms = self.started.elapsed().as_millis();
        log::debug!("iteration {k}: lower bound {lower_bound}");
        self.state.history.push(row.clone());
        Ok(row)
    }

    fn iterate(&mut self, k: usize, path: &SamplePath) -> Result<(), EngineError> {
        let opts = &self.opts.stage;
        let fwd = forward_pass(self.problem, &self.state.vfs, &self.measure, path, opts).map_err(|(stage, source)| {
            EngineError::Stage {
                iteration: k,
                stage,
                source,
            }
        })?;
        if self.opts.prune_window.is_some() {
            for (t, vf) in self.state.vfs.iter_mut().enumerate() {
                vf.record_activity(&fwd.trajectory.states[t], k);
            }
        }
        let t_count = self.problem.num_stages();
        if !self.opts.backward_resolve {
            for cut in backward_pass(&fwd, opts, k) {
                let t = cut.stage;
                self.state.vfs[t]
                    .add_cut(cut)
                    .map_err(|source| EngineError::Stage { iteration: k, stage: t, source })?;
            }
            return Ok(());
        }
        for t in (0..t_count).rev() {
            let x = &fwd.trajectory.states[t];
            let cut = if t + 1 == t_count {
                fwd.solutions[t].cut(t, x, opts.cut_rule, k)
            } else {
                solve_stage(self.problem, t, x, future(&self.state.vfs, t), &self.measure, opts)
                    .map_err(|source| EngineError::Stage { iteration: k, stage: t, source })?
                    .cut(t, x, opts.cut_rule, k)
            };
            self.state.vfs[t]
                .add_cut(cut)
                .map_err(|source| EngineError::Stage { iteration: k, stage: t, source })?;
        }
        Ok(())
    }

    /// Statistical upper bound of the current policy.
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

    /// Runs `iterations` further iterations.
    pub fn run(&mut self, iterations: usize) -> Result<&[BoundsRow], EngineError> {
        let start = self.state.history.len();
        for _ in 0..iterations {
            self.step()?;
        }
        Ok(&self.state.history[start..])
    }
}

/// Trains for `iterations` iterations from scratch.
pub fn train(
    problem: &SocProblem,
    measure: &RiskMeasure,
    iterations: usize,
    opts: TrainOptions,
) -> Result<TrainState, EngineError> {
    let mut trainer = Trainer::new(problem, measure.clone(), opts)?;
    trainer.run(iterations)?;
    Ok(trainer.into_state())
}
