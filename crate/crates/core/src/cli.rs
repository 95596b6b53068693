//! Command-line front end: instance generation, training, evaluation,
//! parameter sweeps and the exact-oracle sandwich.
//!
//! CSV schemas (column order is fixed):
//!
//! * `train`: `iteration,lower_bound,upper_mean,upper_std,upper_bound`
//!   (optional timing sidecar: `iteration,wall_time_ms`)
//! * `evaluate`: `measure,iterations,samples,lower_bound,upper_mean,upper_std,upper_bound,gap_pct`
//! * `sweep`: `parameter,value,lower_bound,upper_mean,upper_std,upper_bound,gap_pct`

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::engine::{
    final_eval_seed, relative_gap, write_bounds_csv, write_timing_csv, BoundsRow, Checkpoint, EngineError,
    TrainOptions, Trainer,
};
use crate::model::{generate_hydrothermal, tiny_instance, HydroParams, ModelError, SocProblem, TinyFamily};
use crate::oracle::{exact_optimal_value, exact_policy_value, OracleError, OracleOptions};
use crate::policy::Policy;
use crate::qfactor::QTrainer;
use crate::risk::{KlDivergence, MeanAvar, OceUtility, RiskError, RiskMeasure};
use crate::ubound::{enumerate_expected_v1, z_from_beta, BoundError, EvaluationResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("--risk {spec:?}: {reason}")]
    RiskSpec { spec: String, reason: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("training failed ({source}); partial results saved to {saved}")]
    Partial {
        #[source]
        source: EngineError,
        saved: String,
    },
}

#[derive(Debug, Parser)]
#[command(name = "risksddp", version, about = "Risk-averse SDDP with statistical upper bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a problem instance.
    Generate(GenerateArgs),
    /// Train a policy and write the bounds history.
    Train(TrainArgs),
    /// Train (or load) a policy and write one final-evaluation row.
    Evaluate(EvaluateArgs),
    /// Train and evaluate over a grid of risk parameters.
    Sweep(SweepArgs),
    /// Compare a trained policy against the exact scenario-tree values.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InstanceKind {
    Hydro,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Inventory1,
    Inventory2,
    Reservoir,
}

impl From<Family> for TinyFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Inventory1 => TinyFamily::Inventory1,
            Family::Inventory2 => TinyFamily::Inventory2,
            Family::Reservoir => TinyFamily::Reservoir,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Variant {
    #[default]
    Value,
    Qfactor,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = InstanceKind::Hydro)]
    pub kind: InstanceKind,
    /// Hydro-thermal parameters as JSON; unspecified fields take their defaults.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub reservoirs: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub realizations: Option<usize>,
    /// Seed of the inflow sample.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Family::Inventory1)]
    pub family: Family,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by every subcommand that trains.
#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub instance: PathBuf,
    /// Iterations K.
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// Evaluate the policy every this many iterations (0 disables).
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    /// Paths of the periodic evaluations.
    #[arg(long, default_value_t = 10)]
    pub eval_samples: usize,
    /// Upper bound holds with probability about 1 − β.
    #[arg(long, conflicts_with = "z")]
    pub beta: Option<f64>,
    /// Quantile multiplier of the upper bound (default 2).
    #[arg(long)]
    pub z: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Variant::Value)]
    pub variant: Variant,
    /// Re-solve stages against the updated pools in the backward pass.
    #[arg(long)]
    pub backward_resolve: bool,
    /// Threads for policy evaluation.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Start from the cuts of a checkpoint.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub train: TrainFlags,
    /// `expectation`, `mean-avar:λ0,λ1,…;α1,…`, `kl:ε` or `oce:<file>`.
    #[arg(long, default_value = "expectation")]
    pub risk: String,
    /// Bounds history CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Wall-clock times per iteration.
    #[arg(long)]
    pub timing: Option<PathBuf>,
    /// Cut pools at the end of the run (or at the failure point).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "expectation")]
    pub risk: String,
    /// Paths of the final evaluation.
    #[arg(long, default_value_t = 3000)]
    pub samples: usize,
    /// Result CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub train: TrainFlags,
    /// AV@R weights λ of `(1 − λ)·E + λ·AV@R_α`.
    #[arg(long, value_delimiter = ',', conflicts_with = "epsilons", required_unless_present = "epsilons")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// KL radii.
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Vec<f64>,
    #[arg(long, default_value_t = 3000)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value = "expectation")]
    pub risk: String,
    /// Maximum scenario-tree size.
    #[arg(long, default_value_t = 100_000)]
    pub budget: u128,
}

/// Parses a `--risk` value.
pub fn parse_risk(spec: &str) -> Result<RiskMeasure, CliError> {
    let bad = |reason: String| CliError::RiskSpec {
        spec: spec.to_string(),
        reason,
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(format!("{v:?}: {e}")));
    let list = |v: &str| -> Result<Vec<f64>, CliError> {
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(num).collect()
    };
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let measure = match kind {
        "expectation" if arg.is_empty() => RiskMeasure::Expectation,
        "mean-avar" => {
            let (w, a) = arg
                .split_once(';')
                .ok_or_else(|| bad("expected weights;levels".into()))?;
            RiskMeasure::MeanAvar(MeanAvar::new(list(w)?, list(a)?).map_err(|e| bad(e.to_string()))?)
        }
        "kl" => RiskMeasure::Kl(KlDivergence::new(num(arg)?).map_err(|e| bad(e.to_string()))?),
        "oce" => {
            let text = std::fs::read_to_string(arg).map_err(|e| bad(e.to_string()))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let u: OceUtility = serde_path_to_error::deserialize(de).map_err(|e| bad(e.to_string()))?;
            u.validate().map_err(|e| bad(e.to_string()))?;
            RiskMeasure::Oce(u)
        }
        _ => return Err(bad("unknown measure".into())),
    };
    Ok(measure)
}

fn load_instance(path: &Path) -> Result<SocProblem, CliError> {
    Ok(SocProblem::load(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

impl TrainFlags {
    fn options(&self) -> Result<TrainOptions, CliError> {
        let z = match (self.z, self.beta) {
            (Some(z), _) => z,
            (None, Some(beta)) => z_from_beta(beta)?,
            (None, None) => 2.0,
        };
        if !z.is_finite() {
            return Err(CliError::Config(format!("--z must be finite, got {z}")));
        }
        if self.threads == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        if self.eval_every > 0 && self.eval_samples == 0 {
            return Err(CliError::Config("--eval-samples must be >= 1".into()));
        }
        Ok(TrainOptions {
            seed: self.seed,
            eval_every: self.eval_every,
            eval_samples: self.eval_samples,
            z,
            threads: self.threads,
            backward_resolve: self.backward_resolve,
            ..TrainOptions::default()
        })
    }
}

/// A training run of either variant.
enum Run<'a> {
    Value(Trainer<'a>),
    Q(QTrainer<'a>),
}

impl<'a> Run<'a> {
    fn new(problem: &'a SocProblem, measure: RiskMeasure, flags: &TrainFlags) -> Result<Self, CliError> {
        let opts = flags.options()?;
        Ok(match flags.variant {
            Variant::Value => match &flags.warm_start {
                Some(path) => {
                    let state = Checkpoint::load(path)?.into_state(problem)?;
                    Run::Value(Trainer::resume(problem, measure, opts, state)?)
                }
                None => Run::Value(Trainer::new(problem, measure, opts)?),
            },
            Variant::Qfactor => {
                if flags.warm_start.is_some() {
                    return Err(CliError::Config("--warm-start applies to the value variant only".into()));
                }
                Run::Q(QTrainer::new(problem, measure, opts)?)
            }
        })
    }

    fn run(&mut self, iterations: usize) -> Result<(), EngineError> {
        for _ in 0..iterations {
            let row = match self {
                Run::Value(t) => t.step()?,
                Run::Q(t) => t.step()?,
            };
            if let Some(u) = row.upper_bound {
                log::info!("iteration {}: L = {}, U = {}", row.iteration, row.lower_bound, u);
            } else {
                log::debug!("iteration {}: L = {}", row.iteration, row.lower_bound);
            }
        }
        Ok(())
    }

    fn history(&self) -> &[BoundsRow] {
        match self {
            Run::Value(t) => &t.state().history,
            Run::Q(t) => t.history(),
        }
    }

    fn iteration(&self) -> usize {
        match self {
            Run::Value(t) => t.state().iteration,
            Run::Q(t) => t.iteration(),
        }
    }

    fn lower_bound(&self) -> Result<f64, CliError> {
        Ok(match self {
            Run::Value(t) => t.lower_bound(),
            Run::Q(t) => t.lower_bound().map_err(|source| EngineError::Stage {
                iteration: t.iteration(),
                stage: 0,
                source,
            })?,
        })
    }

    fn checkpoint(&self, seed: u64) -> Checkpoint {
        match self {
            Run::Value(t) => Checkpoint::from_state(t.state()),
            Run::Q(t) => Checkpoint {
                version: crate::engine::CHECKPOINT_VERSION,
                seed,
                iteration: t.iteration(),
                cuts: t.cuts(),
            },
        }
    }

    fn evaluate(&self, samples: usize, seed: u64) -> Result<EvaluationResult, BoundError> {
        match self {
            Run::Value(t) => t.evaluate(samples, seed),
            Run::Q(t) => t.evaluate(samples, seed),
        }
    }

    fn policy_value(&self, problem: &SocProblem, measure: &RiskMeasure, budget: u128) -> Result<(f64, f64), CliError> {
        let sandwich = |p: &dyn Policy| -> Result<(f64, f64), CliError> {
            Ok((
                exact_policy_value(problem, p, measure, budget)?,
                enumerate_expected_v1(problem, p, measure, budget)?,
            ))
        };
        match self {
            Run::Value(t) => sandwich(&t.policy()),
            Run::Q(t) => sandwich(&t.policy()),
        }
    }
}

/// Trains `flags.iters` iterations; on failure the partial history and cuts
/// are written next to `out` (or to `checkpoint`) before the error is returned.
fn train_or_save(
    run: &mut Run<'_>,
    flags: &TrainFlags,
    out: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let Err(source) = run.run(flags.iters) else {
        return Ok(());
    };
    let ckpt = match (checkpoint, out) {
        (Some(c), _) => c.to_path_buf(),
        (None, Some(o)) => o.with_extension("checkpoint.json"),
        (None, None) => PathBuf::from("risksddp.checkpoint.json"),
    };
    let mut saved = vec![ckpt.display().to_string()];
    run.checkpoint(flags.seed).save(&ckpt)?;
    if let Some(o) = out {
        write_bounds_csv(create(o)?, run.history())?;
        saved.push(o.display().to_string());
    }
    Err(CliError::Partial {
        source,
        saved: saved.join(", "),
    })
}

fn gap_pct(lower: f64, upper: f64) -> String {
    format!("{:.2}", 100.0 * relative_gap(lower, upper))
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let problem = match args.kind {
        InstanceKind::Hydro => {
            let mut params = match &args.params {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    let de = &mut serde_json::Deserializer::from_str(&text);
                    serde_path_to_error::deserialize(de)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                }
                None => HydroParams::default(),
            };
            if let Some(r) = args.reservoirs {
                params = params.with_reservoirs(r);
            }
            if let Some(t) = args.stages {
                params.stages = t;
            }
            if let Some(n) = args.realizations {
                params.realizations = n;
            }
            if let Some(s) = args.seed {
                params.seed = s;
            }
            generate_hydrothermal(&params)?
        }
        InstanceKind::Tiny => {
            let stages = args.stages.unwrap_or(2);
            let n = args.realizations.unwrap_or(2);
            if !(2..=3).contains(&stages) || !(2..=3).contains(&n) {
                return Err(CliError::Config("tiny instances need --stages and --realizations in {2, 3}".into()));
            }
            tiny_instance(args.family.into(), stages, n)
        }
    };
    problem.save(&args.out)?;
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let problem = load_instance(&args.train.instance)?;
    let measure = parse_risk(&args.risk)?;
    let mut run = Run::new(&problem, measure, &args.train)?;
    train_or_save(&mut run, &args.train, Some(&args.out), args.checkpoint.as_deref())?;
    write_bounds_csv(create(&args.out)?, run.history())?;
    if let Some(t) = &args.timing {
        write_timing_csv(create(t)?, run.history())?;
    }
    if let Some(c) = &args.checkpoint {
        run.checkpoint(args.train.seed).save(c)?;
    }
    Ok(())
}

/// Trains one measure and evaluates the final policy on `samples` paths.
fn train_and_evaluate(
    problem: &SocProblem,
    measure: RiskMeasure,
    flags: &TrainFlags,
    samples: usize,
) -> Result<(f64, EvaluationResult), CliError> {
    if samples == 0 {
        return Err(CliError::Config("--samples must be >= 1".into()));
    }
    let mut run = Run::new(problem, measure, flags)?;
    train_or_save(&mut run, flags, None, None)?;
    let lower = run.lower_bound()?;
    let result = run.evaluate(samples, final_eval_seed(flags.seed, run.iteration()))?;
    Ok((lower, result))
}

fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let problem = load_instance(&args.train.instance)?;
    let measure = parse_risk(&args.risk)?;
    let (lower, r) = train_and_evaluate(&problem, measure, &args.train, args.samples)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "measure",
        "iterations",
        "samples",
        "lower_bound",
        "upper_mean",
        "upper_std",
        "upper_bound",
        "gap_pct",
    ])
    .map_err(EngineError::from)?;
    w.write_record([
        args.risk.clone(),
        args.train.iters.to_string(),
        args.samples.to_string(),
        lower.to_string(),
        r.mean.to_string(),
        r.std.to_string(),
        r.bound.to_string(),
        gap_pct(lower, r.bound),
    ])
    .map_err(EngineError::from)?;
    w.flush().map_err(EngineError::from)?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let problem = load_instance(&args.train.instance)?;
    let grid: Vec<(&str, f64, RiskMeasure)> = if args.epsilons.is_empty() {
        args.lambdas
            .iter()
            .map(|&l| Ok(("lambda", l, RiskMeasure::MeanAvar(MeanAvar::convex_combination(l, args.alpha)?))))
            .collect::<Result<_, RiskError>>()?
    } else {
        args.epsilons
            .iter()
            .map(|&e| Ok(("epsilon", e, RiskMeasure::kl(e)?)))
            .collect::<Result<_, RiskError>>()?
    };
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "parameter",
        "value",
        "lower_bound",
        "upper_mean",
        "upper_std",
        "upper_bound",
        "gap_pct",
    ])
    .map_err(EngineError::from)?;
    for (name, value, measure) in grid {
        log::info!("{name} = {value}");
        let (lower, r) = train_and_evaluate(&problem, measure, &args.train, args.samples)?;
        w.write_record([
            name.to_string(),
            value.to_string(),
            lower.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.bound.to_string(),
            gap_pct(lower, r.bound),
        ])
        .map_err(EngineError::from)?;
    }
    w.flush().map_err(EngineError::from)?;
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let problem = load_instance(&args.train.instance)?;
    let measure = parse_risk(&args.risk)?;
    let exact = exact_optimal_value(
        &problem,
        &measure,
        &OracleOptions {
            budget: args.budget,
            ..OracleOptions::default()
        },
    )?;
    let mut run = Run::new(&problem, measure.clone(), &args.train)?;
    train_or_save(&mut run, &args.train, None, None)?;
    let lower = run.lower_bound()?;
    let (policy, expected) = run.policy_value(&problem, &measure, args.budget)?;
    let mut out = io::stdout().lock();
    let lines = [
        ("lower_bound", lower),
        ("optimal_value", exact.value),
        ("optimal_value_lower", exact.lower),
        ("policy_value", policy),
        ("expected_v1", expected),
    ];
    for (k, v) in lines {
        writeln!(out, "{k} {v}").map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        })?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Oracle(a) => oracle(a),
    }
}

/// Entry point of the binary. Log level comes from `RISKSDDP_LOG`.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RISKSDDP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut shown = e.to_string();
            eprintln!("error: {shown}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                    shown = text;
                }
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risk_specs() {
        assert_eq!(parse_risk("expectation").unwrap(), RiskMeasure::Expectation);
        assert_eq!(
            parse_risk("mean-avar:0.5,0.5;0.1").unwrap(),
            RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.1]).unwrap()
        );
        assert_eq!(parse_risk("kl:1e-3").unwrap(), RiskMeasure::kl(1e-3).unwrap());
        for bad in ["", "kl", "kl:-1", "mean-avar:1", "mean-avar:0.5,0.6;0.1", "cvar:0.1", "expectation:1"] {
            assert!(parse_risk(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn command_line_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
