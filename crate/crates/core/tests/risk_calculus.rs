mod common;

use common::{grid_risk, random_distribution, random_measure};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risksddp::risk::{DiscreteDistribution, RiskMeasure, Theta};

fn setup(seed: u64, kind: usize) -> (ChaCha8Rng, RiskMeasure, DiscreteDistribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_measure(&mut rng, kind);
    let d = random_distribution(&mut rng);
    (rng, m, d)
}

fn random_theta(rng: &mut ChaCha8Rng, m: &RiskMeasure) -> Theta {
    match m {
        RiskMeasure::Expectation => Theta::Empty,
        RiskMeasure::MeanAvar(a) => Theta::Levels((0..a.levels.len()).map(|_| rng.random_range(-10.0..10.0)).collect()),
        RiskMeasure::Kl(_) => Theta::Kl {
            mu: rng.random_range(-10.0..10.0),
            lambda: rng.random_range(0.5..20.0),
        },
        RiskMeasure::Oce(_) => Theta::Scalar(rng.random_range(-10.0..10.0)),
    }
}

/// Distance from `z` to the nearest kink of `Ψ(·, θ)`.
fn kink_distance(m: &RiskMeasure, theta: &Theta, z: f64) -> f64 {
    match (m, theta) {
        (RiskMeasure::MeanAvar(_), Theta::Levels(t)) => t.iter().map(|th| (z - th).abs()).fold(f64::INFINITY, f64::min),
        (RiskMeasure::Oce(u), Theta::Scalar(th)) => {
            u.breakpoints.iter().map(|b| (th - z - b).abs()).fold(f64::INFINITY, f64::min)
        }
        _ => f64::INFINITY,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn minimizer_matches_grid_oracle(seed in any::<u64>(), kind in 0usize..4) {
        let (_, m, d) = setup(seed, kind);
        let theta = m.argmin_theta(&d).unwrap();
        let ours = m.objective(&d, &theta).unwrap();
        let oracle = grid_risk(&m, &d);
        prop_assert!((ours - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()), "{m:?} {d:?}: {ours} vs {oracle}");
    }

    #[test]
    fn subgradient_matches_finite_differences(seed in any::<u64>(), kind in 0usize..4) {
        let (mut rng, m, _) = setup(seed, kind);
        let theta = random_theta(&mut rng, &m);
        let z: f64 = rng.random_range(-10.0..10.0);
        let h = 1e-6;
        prop_assume!(kink_distance(&m, &theta, z) > 1e-3);
        let g = m.psi_subgrad(z, &theta).unwrap();
        let fd = (m.psi(z + h, &theta).unwrap() - m.psi(z - h, &theta).unwrap()) / (2.0 * h);
        prop_assert!((g - fd).abs() <= 1e-5 * g.abs().max(1.0), "{m:?} {theta:?} z={z}: {g} vs {fd}");
    }

    #[test]
    fn translation_equivariance(seed in any::<u64>(), kind in 0usize..4, c in -20.0f64..20.0) {
        let (_, m, d) = setup(seed, kind);
        let base = m.risk_eval(&d).unwrap();
        let shifted = m.risk_eval(&d.map_values(|z| z + c)).unwrap();
        prop_assert!((shifted - base - c).abs() <= 1e-8 * (1.0 + base.abs() + c.abs()));
    }

    #[test]
    fn positive_homogeneity(seed in any::<u64>(), kind in 0usize..3, t in 0.1f64..10.0) {
        let (_, m, d) = setup(seed, kind);
        let base = m.risk_eval(&d).unwrap();
        let scaled = m.risk_eval(&d.map_values(|z| t * z)).unwrap();
        prop_assert!((scaled - t * base).abs() <= 1e-8 * (1.0 + (t * base).abs()), "{m:?}: {scaled} vs {}", t * base);
    }

    /// Random OCE utilities are not normalized (`u(0) = 0`, `1 ∈ ∂u(0)`), so they are left out.
    #[test]
    fn risk_lies_between_mean_and_max(seed in any::<u64>(), kind in 0usize..3) {
        let (_, m, d) = setup(seed, kind);
        let r = m.risk_eval(&d).unwrap();
        let max = d.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(r >= d.mean() - 1e-9 && r <= max + 1e-9 * (1.0 + max.abs()));
    }

    #[test]
    fn risk_neutral_members_equal_the_mean(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_distribution(&mut rng);
        let pure_mean = RiskMeasure::mean_avar(vec![1.0, 0.0], vec![0.3]).unwrap();
        let avar_one = RiskMeasure::mean_avar(vec![0.0, 1.0], vec![1.0]).unwrap();
        for m in [pure_mean, avar_one] {
            prop_assert!((m.risk_eval(&d).unwrap() - d.mean()).abs() <= 1e-12 * (1.0 + d.mean().abs()));
        }
    }
}
