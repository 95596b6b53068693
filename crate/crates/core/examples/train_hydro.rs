//! Trains a risk-averse policy on the toy hydro-thermal instance and prints
//! the lower bound together with the periodic statistical upper bounds.

use risksddp::engine::{relative_gap, TrainOptions, Trainer};
use risksddp::model::{generate_hydrothermal, HydroParams};
use risksddp::risk::{MeanAvar, RiskMeasure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = generate_hydrothermal(&HydroParams::default())?;
    let measure = RiskMeasure::MeanAvar(MeanAvar::convex_combination(0.5, 0.5)?);
    let opts = TrainOptions {
        seed: 1,
        eval_every: 25,
        eval_samples: 10,
        ..TrainOptions::default()
    };
    let mut trainer = Trainer::new(&problem, measure, opts)?;
    for row in trainer.run(200)? {
        if let Some(u) = row.upper_bound {
            println!("k = {:>3}  L = {:>10.2}  U_S = {:>10.2}", row.iteration, row.lower_bound, u);
        }
    }
    let cuts: usize = trainer.state().vfs.iter().map(|vf| vf.len()).sum();
    println!("final lower bound {:.2} with {cuts} cuts", trainer.lower_bound());

    let final_eval = trainer.evaluate(1000, trainer.eval_seed(200) ^ 1)?;
    println!(
        "1000-path upper bound {:.2} (gap {:.2}%)",
        final_eval.bound,
        100.0 * relative_gap(trainer.lower_bound(), final_eval.bound)
    );
    Ok(())
}
