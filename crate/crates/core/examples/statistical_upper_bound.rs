//! The statistical upper bound `𝔳̄ + z·σ̂/√S` of a trained policy for growing
//! sample sizes, against the exact expectation `E[𝔳_1]` on a tiny instance.

use risksddp::engine::{TrainOptions, Trainer};
use risksddp::model::{tiny_instance, TinyFamily};
use risksddp::risk::RiskMeasure;
use risksddp::ubound::{enumerate_expected_v1, evaluate_policy, z_from_beta, EvalOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = tiny_instance(TinyFamily::Reservoir, 3, 3);
    let measure = RiskMeasure::mean_avar(vec![0.6, 0.4], vec![0.3])?;
    let mut trainer = Trainer::new(&problem, measure.clone(), TrainOptions { eval_every: 0, ..Default::default() })?;
    trainer.run(100)?;
    let policy = trainer.policy();
    let exact = enumerate_expected_v1(&problem, &policy, &measure, 1_000_000)?;
    let z = z_from_beta(0.05)?;
    println!("lower bound {:.6}, E[v_1] = {exact:.6}, z = {z:.4}", trainer.lower_bound());
    for samples in [10, 100, 1000, 10_000] {
        let r = evaluate_policy(&problem, &policy, &measure, &EvalOptions { samples, z, seed: 3, ..Default::default() })?;
        println!("S = {samples:>6}: mean {:.6}  std {:.6}  bound {:.6}", r.mean, r.std, r.bound);
    }
    Ok(())
}
