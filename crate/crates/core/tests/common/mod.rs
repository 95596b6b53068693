//! Brute-force references shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use risksddp::model::SocProblem;
use risksddp::risk::{DiscreteDistribution, MeanAvar, OceUtility, RiskMeasure};

/// Random distribution with 1..=8 atoms on a 0.25 grid in [-10, 10].
pub fn random_distribution(rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    let n = rng.random_range(1..=8);
    let values = (0..n).map(|_| rng.random_range(-40..=40) as f64 * 0.25).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(1..=10) as f64).collect();
    let total: f64 = weights.iter().sum();
    DiscreteDistribution::new(values, weights.iter().map(|w| w / total).collect()).unwrap()
}

/// One random measure of the given kind (0 expectation, 1 mean-AV@R, 2 KL, 3 OCE).
pub fn random_measure(rng: &mut ChaCha8Rng, kind: usize) -> RiskMeasure {
    match kind {
        0 => RiskMeasure::Expectation,
        1 => {
            let k = rng.random_range(1..=3);
            let raw: Vec<f64> = (0..=k).map(|_| rng.random_range(1..=10) as f64).collect();
            let total: f64 = raw.iter().sum();
            let levels = (0..k).map(|_| rng.random_range(1..=19) as f64 / 20.0).collect();
            RiskMeasure::mean_avar(raw.iter().map(|w| w / total).collect(), levels).unwrap()
        }
        2 => RiskMeasure::kl([1e-3, 1e-2, 0.1, 0.5][rng.random_range(0..4)]).unwrap(),
        _ => {
            let k = rng.random_range(1..=3);
            let mut breakpoints: Vec<f64> = (0..k).map(|_| rng.random_range(-12..=12) as f64 * 0.5).collect();
            breakpoints.sort_by(f64::total_cmp);
            breakpoints.dedup();
            // slopes from above 1 down to below 1
            let mut slopes: Vec<f64> = (0..=breakpoints.len()).map(|_| rng.random_range(0..=30) as f64 / 10.0).collect();
            slopes.sort_by(|a, b| b.total_cmp(a));
            slopes[0] = slopes[0].max(1.0);
            let last = slopes.len() - 1;
            slopes[last] = slopes[last].min(1.0);
            RiskMeasure::oce(breakpoints, slopes, rng.random_range(-4..=4) as f64).unwrap()
        }
    }
}

fn mean_avar_value(m: &MeanAvar, values: &[f64], probs: &[f64]) -> f64 {
    // Each AV@R term is piecewise linear in its threshold with kinks at the atoms.
    let mean: f64 = values.iter().zip(probs).map(|(z, p)| z * p).sum();
    let mut total = m.expectation_weight() * mean;
    for (w, a) in m.avar_terms() {
        let best = values
            .iter()
            .map(|&t| t + values.iter().zip(probs).map(|(z, p)| p * (z - t).max(0.0)).sum::<f64>() / a)
            .fold(f64::INFINITY, f64::min);
        total += w * best;
    }
    total
}

fn kl_dual(values: &[f64], probs: &[f64], eps: f64, lambda: f64) -> f64 {
    let zmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = values.iter().zip(probs).map(|(z, p)| p * ((z - zmax) / lambda).exp()).sum();
    lambda * eps + zmax + lambda * s.ln()
}

fn kl_value(eps: f64, values: &[f64], probs: &[f64]) -> f64 {
    let zmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let zmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = zmax - zmin;
    if range == 0.0 {
        return zmax;
    }
    // Log-spaced grid over λ, then a ternary refinement around the best node.
    let (lo, hi) = ((1e-7 * range).ln(), (1e7 * range).ln());
    let n = 4000;
    let node = |i: usize| lo + (hi - lo) * i as f64 / n as f64;
    let f = |s: f64| kl_dual(values, probs, eps, s.exp());
    let best = (0..=n).min_by(|&i, &j| f(node(i)).total_cmp(&f(node(j)))).unwrap();
    let (mut a, mut b) = (node(best.saturating_sub(1)), node((best + 1).min(n)));
    for _ in 0..200 {
        let c = a + (b - a) / 3.0;
        let d = b - (b - a) / 3.0;
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    // λ → 0 gives the essential supremum.
    f(0.5 * (a + b)).min(f(node(best))).min(zmax)
}

fn utility(u: &OceUtility, x: f64) -> f64 {
    u.pieces().iter().map(|(s, d)| s * x + d).fold(f64::INFINITY, f64::min)
}

fn oce_value(u: &OceUtility, values: &[f64], probs: &[f64]) -> f64 {
    let obj = |t: f64| t - values.iter().zip(probs).map(|(z, p)| p * utility(u, t - z)).sum::<f64>();
    let mut kinks = u.breakpoints.clone();
    if kinks.is_empty() {
        kinks.push(0.0);
    }
    values
        .iter()
        .flat_map(|z| kinks.iter().map(move |b| z + b))
        .map(obj)
        .fold(f64::INFINITY, f64::min)
}

/// `R(Z)` computed without the library's minimizers.
pub fn grid_risk(measure: &RiskMeasure, dist: &DiscreteDistribution) -> f64 {
    let (v, p) = (dist.values(), dist.probs());
    match measure {
        RiskMeasure::Expectation => v.iter().zip(p).map(|(z, q)| z * q).sum(),
        RiskMeasure::MeanAvar(m) => mean_avar_value(m, v, p),
        RiskMeasure::Kl(k) => kl_value(k.epsilon, v, p),
        RiskMeasure::Oce(u) => oce_value(u, v, p),
    }
}

/// Nested risk of the optimal policy of a problem with one state and one
/// control, by dynamic programming on grids with linear interpolation.
///
/// Controls must have finite, state-independent bounds.
pub fn grid_dp_value(problem: &SocProblem, measure: &RiskMeasure, x_range: (f64, f64), nx: usize, nu: usize) -> f64 {
    assert!(problem.state_dims.iter().all(|&n| n == 1));
    assert!(problem.control_dims.iter().all(|&m| m == 1));
    let xs: Vec<f64> = (0..nx).map(|i| x_range.0 + (x_range.1 - x_range.0) * i as f64 / (nx - 1) as f64).collect();
    let interp = |vals: &[f64], x: f64| -> f64 {
        let s = (x - x_range.0) / (x_range.1 - x_range.0) * (nx - 1) as f64;
        if s <= 0.0 {
            // linear extrapolation keeps convexity
            vals[0] + s * (vals[1] - vals[0])
        } else if s >= (nx - 1) as f64 {
            vals[nx - 1] + (s - (nx - 1) as f64) * (vals[nx - 1] - vals[nx - 2])
        } else {
            let i = s.floor() as usize;
            let f = s - i as f64;
            vals[i] * (1.0 - f) + vals[(i + 1).min(nx - 1)] * f
        }
    };
    let mut next: Vec<f64> = xs.iter().map(|&x| problem.terminal_value(&[x])).collect();
    let stage_value = |t: usize, x: f64, next: &[f64]| -> f64 {
        let st = problem.stage(t);
        let (lo, hi) = (st.control_set.lower(0), st.control_set.upper(0));
        assert!(lo.is_finite() && hi.is_finite());
        let probs = st.probs();
        let mut best = f64::INFINITY;
        for k in 0..nu {
            let u = lo + (hi - lo) * k as f64 / (nu - 1) as f64;
            if st.control_set.violation(&[x], &[u]) > 1e-9 {
                continue;
            }
            let ys: Vec<f64> = st
                .realizations
                .iter()
                .map(|r| r.cost.eval(&[x], &[u]) + interp(next, r.transition(&[x], &[u])[0]))
                .collect();
            let d = DiscreteDistribution::new(ys, probs.clone()).unwrap();
            best = best.min(grid_risk(measure, &d));
        }
        best
    };
    for t in (1..problem.num_stages()).rev() {
        next = xs.iter().map(|&x| stage_value(t, x, &next)).collect();
    }
    stage_value(0, problem.initial_state[0], &next)
}
