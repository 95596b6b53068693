//! Trains the Q-factor variant next to the value-function variant and
//! compares their lower bounds.

use risksddp::engine::{TrainOptions, Trainer};
use risksddp::model::{tiny_instance, TinyFamily};
use risksddp::qfactor::QTrainer;
use risksddp::risk::RiskMeasure;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = tiny_instance(TinyFamily::Reservoir, 3, 2);
    for m in [RiskMeasure::Expectation, RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.3])?] {
        let opts = TrainOptions { eval_every: 0, ..Default::default() };
        let mut value = Trainer::new(&problem, m.clone(), opts.clone())?;
        let mut q = QTrainer::new(&problem, m.clone(), opts)?;
        value.run(100)?;
        q.run(100)?;
        let cuts: usize = q.q_functions().iter().map(|f| f.pool.len()).sum();
        println!("{m:?}");
        println!("  value variant L = {:.8}", value.lower_bound());
        println!("  Q-factor     L = {:.8} ({cuts} cuts)", q.lower_bound()?);
    }
    Ok(())
}
