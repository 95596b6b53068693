//! Evaluates the four supported measures on one loss distribution, both
//! through the variational form `min_θ E[Ψ(Z, θ)]` and in closed form.

use risksddp::risk::{DiscreteDistribution, RiskMeasure};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let loss = DiscreteDistribution::new(vec![-2.0, 0.0, 1.0, 4.0, 10.0], vec![0.2, 0.3, 0.2, 0.2, 0.1])?;
    let measures = [
        ("expectation", RiskMeasure::Expectation),
        ("0.5 E + 0.5 AV@R_0.2", RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.2])?),
        ("AV@R_0.1", RiskMeasure::mean_avar(vec![0.0, 1.0], vec![0.1])?),
        ("KL eps = 0.05", RiskMeasure::kl(0.05)?),
        // u(x) = 2·min(x, 0) turns the optimized certainty equivalent into AV@R_0.5.
        ("OCE", RiskMeasure::oce(vec![0.0], vec![2.0, 0.0], 0.0)?),
    ];
    println!("mean {:.4}", loss.mean());
    for (name, m) in &measures {
        let theta = m.argmin_theta(&loss)?;
        let variational = m.objective(&loss, &theta)?;
        let direct = m.risk_eval(&loss)?;
        println!("{name:>22}: {direct:.6} (variational {variational:.6}, theta {:?})", theta.to_vec());
        // Translation equivariance: ρ(Z + c) = ρ(Z) + c.
        let shifted = m.risk_eval(&loss.map_values(|z| z + 3.0))?;
        assert!((shifted - direct - 3.0).abs() < 1e-8);
    }
    let avar = RiskMeasure::mean_avar(vec![0.0, 1.0], vec![0.5])?.risk_eval(&loss)?;
    let oce = measures[4].1.risk_eval(&loss)?;
    assert!((avar - oce).abs() < 1e-9);
    Ok(())
}
