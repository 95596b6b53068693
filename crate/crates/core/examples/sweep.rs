//! A small version of the λ sweep: relative gap of the toy hydro-thermal
//! instance for `(1 − λ)·E + λ·AV@R_0.5`.

use risksddp::engine::{final_eval_seed, relative_gap, TrainOptions, Trainer};
use risksddp::model::{generate_hydrothermal, HydroParams};
use risksddp::risk::{MeanAvar, RiskMeasure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = generate_hydrothermal(&HydroParams::default())?;
    let (iters, samples, seed) = (150, 1000, 1);
    println!("lambda,lower_bound,upper_bound,gap_pct");
    for lambda in [0.0, 0.5, 1.0] {
        let m = RiskMeasure::MeanAvar(MeanAvar::convex_combination(lambda, 0.5)?);
        let mut trainer = Trainer::new(&problem, m, TrainOptions { seed, eval_every: 0, threads: 4, ..Default::default() })?;
        trainer.run(iters)?;
        let l = trainer.lower_bound();
        let r = trainer.evaluate(samples, final_eval_seed(seed, iters))?;
        println!("{lambda},{l:.2},{:.2},{:.2}", r.bound, 100.0 * relative_gap(l, r.bound));
    }
    Ok(())
}
