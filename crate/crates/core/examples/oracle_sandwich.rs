//! Checks `L_K ≤ v* ≤ policy value ≤ E[𝔳_1]` on a tiny instance for each
//! kind of measure, with `v*` from the extensive-form oracle.

use risksddp::engine::{TrainOptions, Trainer};
use risksddp::model::{tiny_instance, TinyFamily};
use risksddp::oracle::{exact_optimal_value, exact_policy_value, OracleOptions};
use risksddp::risk::RiskMeasure;
use risksddp::ubound::enumerate_expected_v1;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = tiny_instance(TinyFamily::Inventory1, 3, 3);
    let measures = [
        RiskMeasure::Expectation,
        RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.25])?,
        RiskMeasure::kl(0.1)?,
        RiskMeasure::oce(vec![0.0], vec![1.2, 0.6], 0.0)?,
    ];
    for m in measures {
        let mut trainer = Trainer::new(&problem, m.clone(), TrainOptions { eval_every: 0, ..Default::default() })?;
        trainer.run(200)?;
        let lower = trainer.lower_bound();
        let exact = exact_optimal_value(&problem, &m, &OracleOptions::default())?;
        let policy = exact_policy_value(&problem, &trainer.policy(), &m, 1_000_000)?;
        let expected = enumerate_expected_v1(&problem, &trainer.policy(), &m, 1_000_000)?;
        println!("{m:?}");
        println!("  {lower:.8} <= {:.8} <= {policy:.8} <= {expected:.8}", exact.value);
    }
    Ok(())
}
