//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits successfully even when a criterion fails so that the regular test
//! run stays usable; set `ACCEPTANCE_STRICT=1` to turn failures into a
//! nonzero exit status. `ACCEPTANCE_ONLY=3,7` runs a subset.

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risksddp::engine::{final_eval_seed, relative_gap, TrainOptions, Trainer};
use risksddp::model::{generate_hydrothermal, tiny_corpus, tiny_instance, HydroParams, SocProblem, TinyFamily};
use risksddp::oracle::{exact_optimal_value, exact_policy_value, OracleOptions};
use risksddp::qfactor::QTrainer;
use risksddp::risk::{MeanAvar, RiskMeasure, Theta};
use risksddp::ubound::{enumerate_expected_v1, evaluate_policy, EvalOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn quiet(seed: u64) -> TrainOptions {
    TrainOptions {
        seed,
        eval_every: 0,
        threads: threads(),
        ..TrainOptions::default()
    }
}

fn corpus_measures() -> Vec<(&'static str, RiskMeasure)> {
    vec![
        ("expectation", RiskMeasure::Expectation),
        ("mean-avar", RiskMeasure::mean_avar(vec![0.4, 0.3, 0.3], vec![0.5, 0.2]).unwrap()),
        ("kl", RiskMeasure::kl(0.05).unwrap()),
        ("oce", RiskMeasure::oce(vec![-0.5, 0.5], vec![1.6, 1.0, 0.4], 0.0).unwrap()),
    ]
}

struct Sandwich {
    lower: f64,
    optimal: f64,
    optimal_lower: f64,
    policy: f64,
    expected: f64,
}

fn sandwich_value_variant(p: &SocProblem, m: &RiskMeasure, iters: usize) -> Sandwich {
    let mut tr = Trainer::new(p, m.clone(), quiet(0)).unwrap();
    tr.run(iters).unwrap();
    let exact = exact_optimal_value(p, m, &OracleOptions::default()).unwrap();
    Sandwich {
        lower: tr.lower_bound(),
        optimal: exact.value,
        optimal_lower: exact.lower,
        policy: exact_policy_value(p, &tr.policy(), m, 10_000_000).unwrap(),
        expected: enumerate_expected_v1(p, &tr.policy(), m, 10_000_000).unwrap(),
    }
}

/// Largest violation of `L ≤ v* ≤ policy ≤ E[𝔳_1]`, relative to `1 + |v*|`.
fn sandwich_violation(s: &Sandwich) -> f64 {
    let scale = 1.0 + s.optimal.abs();
    [s.lower - s.optimal, s.optimal_lower - s.policy, s.policy - s.expected]
        .iter()
        .fold(0.0f64, |m, v| m.max(v / scale))
}

/// Criteria 1 and 2 share the trained corpus.
fn corpus_runs() -> Vec<(String, &'static str, bool, Sandwich)> {
    let mut out = Vec::new();
    for (name, p) in tiny_corpus() {
        for (kind, m) in corpus_measures() {
            let s = sandwich_value_variant(&p, &m, 500);
            out.push((name.clone(), kind, m.is_polyhedral(), s));
        }
    }
    out
}

fn sandwich(runs: &[(String, &'static str, bool, Sandwich)]) -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    for (name, kind, polyhedral, s) in runs {
        let tol = if *polyhedral { 1e-6 } else { 1e-3 };
        let v = sandwich_violation(s);
        if v > tol {
            failures += 1;
        }
        if v > worst.0 {
            worst = (v, format!("{name}/{kind}"));
        }
    }
    outcome(
        failures == 0,
        format!("{} runs, {failures} violations, worst relative violation {:.2e} ({})", runs.len(), worst.0, worst.1),
    )
}

fn convergence(runs: &[(String, &'static str, bool, Sandwich)]) -> Outcome {
    let mut worst = (0.0f64, String::new());
    let mut n = 0;
    for (name, kind, polyhedral, s) in runs.iter().filter(|r| r.2) {
        let _ = polyhedral;
        n += 1;
        let gap = (s.optimal - s.lower) / (1.0 + s.optimal.abs());
        if gap > worst.0 {
            worst = (gap, format!("{name}/{kind}"));
        }
    }
    outcome(worst.0 <= 1e-3, format!("{n} polyhedral runs, worst (v* - L_K)/(1+|v*|) = {:.2e} ({})", worst.0, worst.1))
}

fn risk_neutral_identity() -> Outcome {
    let pure_mean = RiskMeasure::mean_avar(vec![1.0, 0.0], vec![0.5]).unwrap();
    let mut worst_cut = 0.0f64;
    for (family, t, n) in [(TinyFamily::Inventory1, 3, 3), (TinyFamily::Inventory2, 3, 2), (TinyFamily::Reservoir, 3, 3)] {
        let p = tiny_instance(family, t, n);
        let mut a = Trainer::new(&p, RiskMeasure::Expectation, quiet(2)).unwrap();
        let mut b = Trainer::new(&p, pure_mean.clone(), quiet(2)).unwrap();
        a.run(100).unwrap();
        b.run(100).unwrap();
        for (va, vb) in a.state().vfs.iter().zip(&b.state().vfs) {
            if va.len() != vb.len() {
                worst_cut = f64::INFINITY;
                continue;
            }
            for (ca, cb) in va.cuts().iter().zip(vb.cuts()) {
                worst_cut = worst_cut.max((ca.h - cb.h).abs());
                for (x, y) in ca.a.iter().zip(&cb.a) {
                    worst_cut = worst_cut.max((x - y).abs());
                }
            }
        }
    }
    let avar_one = RiskMeasure::mean_avar(vec![0.0, 1.0], vec![1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_eval = 0.0f64;
    for _ in 0..1000 {
        let d = common::random_distribution(&mut rng);
        worst_eval = worst_eval.max((avar_one.risk_eval(&d).unwrap() - d.mean()).abs());
    }
    outcome(
        worst_cut <= 1e-12 && worst_eval <= 1e-12,
        format!("max cut difference {worst_cut:.2e} on 3 instances; max |AV@R_1 - E| {worst_eval:.2e} on 1000 distributions"),
    )
}

fn hydro() -> SocProblem {
    generate_hydrothermal(&HydroParams::default()).unwrap()
}

fn kl_limit() -> Outcome {
    let p = hydro();
    let lower = |m: RiskMeasure| {
        let mut tr = Trainer::new(&p, m, quiet(1)).unwrap();
        tr.run(300).unwrap();
        tr.lower_bound()
    };
    let le = lower(RiskMeasure::Expectation);
    let lk = lower(RiskMeasure::kl(1e-12).unwrap());
    let diff = (lk - le).abs();
    outcome(
        diff <= 1e-3 * (1.0 + le.abs()),
        format!("L_E = {le:.4}, L_KL(1e-12) = {lk:.4}, |diff| = {diff:.4} (limit {:.4})", 1e-3 * (1.0 + le.abs())),
    )
}

fn final_gap(p: &SocProblem, m: RiskMeasure, seed: u64) -> f64 {
    let mut tr = Trainer::new(p, m, quiet(seed)).unwrap();
    tr.run(300).unwrap();
    let r = tr.evaluate(3000, final_eval_seed(seed, 300)).unwrap();
    relative_gap(tr.lower_bound(), r.bound)
}

fn nondecreasing(gaps: &[f64]) -> bool {
    gaps.iter().all(|g| g.is_finite()) && gaps.windows(2).all(|w| w[0] <= w[1])
}

fn fmt_gaps(gaps: &[f64]) -> String {
    gaps.iter().map(|g| format!("{:.2}%", 100.0 * g)).collect::<Vec<_>>().join(" / ")
}

fn gap_trends() -> Outcome {
    let p = hydro();
    let mut pass = true;
    let mut detail = Vec::new();
    for seed in [1, 2] {
        let lambda: Vec<f64> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&l| final_gap(&p, RiskMeasure::MeanAvar(MeanAvar::convex_combination(l, 0.5).unwrap()), seed))
            .collect();
        let eps: Vec<f64> = [1e-12, 1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&e| final_gap(&p, RiskMeasure::kl(e).unwrap(), seed))
            .collect();
        pass &= nondecreasing(&lambda) && nondecreasing(&eps);
        detail.push(format!("seed {seed}: lambda {} | eps {}", fmt_gaps(&lambda), fmt_gaps(&eps)));
    }
    outcome(pass, detail.join("; "))
}

fn sample_std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn stabilization() -> Outcome {
    let p = hydro();
    let m = RiskMeasure::MeanAvar(MeanAvar::convex_combination(0.5, 0.5).unwrap());
    let opts = TrainOptions {
        seed: 1,
        eval_every: 10,
        eval_samples: 10,
        threads: threads(),
        ..TrainOptions::default()
    };
    let mut tr = Trainer::new(&p, m, opts).unwrap();
    let u: Vec<f64> = tr.run(3000).unwrap().iter().filter_map(|r| r.upper_bound).collect();
    let first = sample_std(&u[..50]);
    let last = sample_std(&u[u.len() - 50..]);
    outcome(
        last <= 0.25 * first,
        format!("{} evaluations; std of first 50 = {first:.1}, last 50 = {last:.1}, ratio {:.3} (limit 0.25)", u.len(), last / first),
    )
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

fn near_kink(m: &RiskMeasure, theta: &Theta, z: f64) -> bool {
    match (m, theta) {
        (RiskMeasure::MeanAvar(_), Theta::Levels(t)) => t.iter().any(|th| (z - th).abs() < 1e-3),
        (RiskMeasure::Oce(u), Theta::Scalar(th)) => u.breakpoints.iter().any(|b| (th - z - b).abs() < 1e-3),
        _ => false,
    }
}

fn risk_calculus() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut argmin_worst, mut grad_worst, mut coh_worst) = (0.0f64, 0.0f64, 0.0f64);
    for kind in 0..4 {
        for _ in 0..1000 {
            let m = common::random_measure(&mut rng, kind);
            let d = common::random_distribution(&mut rng);
            let theta = m.argmin_theta(&d).unwrap();
            let ours = m.objective(&d, &theta).unwrap();
            let oracle = common::grid_risk(&m, &d);
            argmin_worst = argmin_worst.max((ours - oracle).abs() / (1.0 + oracle.abs()));

            let base = m.risk_eval(&d).unwrap();
            let c = rng.random_range(-20.0..20.0);
            let shifted = m.risk_eval(&d.map_values(|z| z + c)).unwrap();
            coh_worst = coh_worst.max((shifted - base - c).abs() / (1.0 + base.abs() + c.abs()));
            if kind < 3 {
                let t = rng.random_range(0.1..10.0);
                let scaled = m.risk_eval(&d.map_values(|z| t * z)).unwrap();
                coh_worst = coh_worst.max((scaled - t * base).abs() / (1.0 + (t * base).abs()));
            }

            let mut checked = false;
            while !checked {
                let th = random_theta(&mut rng, &m);
                let z: f64 = rng.random_range(-10.0..10.0);
                if near_kink(&m, &th, z) {
                    continue;
                }
                let h = 1e-6;
                let g = m.psi_subgrad(z, &th).unwrap();
                let fd = (m.psi(z + h, &th).unwrap() - m.psi(z - h, &th).unwrap()) / (2.0 * h);
                grad_worst = grad_worst.max((g - fd).abs() / g.abs().max(1.0));
                checked = true;
            }
        }
    }
    outcome(
        argmin_worst <= 1e-6 && grad_worst <= 1e-5 && coh_worst <= 1e-8,
        format!("4000 cases: argmin vs grid {argmin_worst:.2e}, subgradient vs FD {grad_worst:.2e}, coherence {coh_worst:.2e}"),
    )
}

fn monte_carlo() -> Outcome {
    let p = tiny_instance(TinyFamily::Inventory2, 3, 3);
    let m = RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.3]).unwrap();
    let mut tr = Trainer::new(&p, m.clone(), quiet(0)).unwrap();
    tr.run(50).unwrap();
    let exact = enumerate_expected_v1(&p, &tr.policy(), &m, 1_000_000).unwrap();
    let s = 10_000;
    let hits = (0..100u64)
        .filter(|&seed| {
            let opts = EvalOptions { samples: s, seed: 1000 + seed, threads: threads(), ..EvalOptions::default() };
            let r = evaluate_policy(&p, &tr.policy(), &m, &opts).unwrap();
            (r.mean - exact).abs() <= 4.0 * r.std / (s as f64).sqrt()
        })
        .count();
    outcome(hits >= 99, format!("{hits}/100 seeds within 4 sigma/sqrt(S) of E[v1] = {exact:.6}"))
}

fn qfactor() -> Outcome {
    let instances = [
        tiny_instance(TinyFamily::Inventory1, 3, 3),
        tiny_instance(TinyFamily::Inventory2, 2, 3),
        tiny_instance(TinyFamily::Reservoir, 3, 2),
        tiny_instance(TinyFamily::Reservoir, 2, 3),
    ];
    let measures = [RiskMeasure::Expectation, RiskMeasure::mean_avar(vec![0.5, 0.5], vec![0.3]).unwrap()];
    let mut worst_sandwich = 0.0f64;
    let mut worst_sequence = 0.0f64;
    let mut worst_final = 0.0f64;
    for p in &instances {
        for m in &measures {
            let mut q = QTrainer::new(p, m.clone(), quiet(0)).unwrap();
            q.run(500).unwrap();
            let exact = exact_optimal_value(p, m, &OracleOptions::default()).unwrap();
            let s = Sandwich {
                lower: q.lower_bound().unwrap(),
                optimal: exact.value,
                optimal_lower: exact.lower,
                policy: exact_policy_value(p, &q.policy(), m, 10_000_000).unwrap(),
                expected: enumerate_expected_v1(p, &q.policy(), m, 10_000_000).unwrap(),
            };
            worst_sandwich = worst_sandwich.max(sandwich_violation(&s));
            if *m == RiskMeasure::Expectation {
                let mut v = Trainer::new(p, m.clone(), quiet(0)).unwrap();
                v.run(500).unwrap();
                for (a, b) in q.history().iter().zip(&v.state().history) {
                    worst_sequence = worst_sequence.max((a.lower_bound - b.lower_bound).abs());
                }
                worst_final = worst_final.max((s.lower - v.lower_bound()).abs());
            }
        }
    }
    outcome(
        worst_sandwich <= 1e-6 && worst_sequence <= 1e-8,
        format!("worst sandwich violation {worst_sandwich:.2e}; max |L_k(Q) - L_k(V)| over k = {worst_sequence:.2e} (limit 1e-8), at k = 500 {worst_final:.2e}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_risksddp");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).current_dir(dir.path()).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["generate", "--out", "hydro.json"]);
    let train = |out: &str, threads: &str| {
        run(&[
            "train", "--instance", "hydro.json", "--risk", "mean-avar:0.5,0.5;0.5", "--iters", "100", "--seed", "5",
            "--threads", threads, "--out", out,
        ]);
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = train("a.csv", "1");
    let b = train("b.csv", "1");
    let c = train("c.csv", "4");
    outcome(a == b && a == c, format!("serial/serial identical: {}, serial/4 threads identical: {}", a == b, a == c))
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |i: usize| only.as_ref().is_none_or(|o| o.contains(&i));
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");

    let mut failed = 0;
    let mut report = |i: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(i) {
            return;
        }
        let start = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("[{status}] {i:>2} {name}: {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
    };

    let mut runs = Vec::new();
    report(1, "sandwich", &mut || {
        runs = corpus_runs();
        sandwich(&runs)
    });
    if runs.is_empty() && wanted(2) {
        runs = corpus_runs();
    }
    report(2, "lower-bound convergence", &mut || convergence(&runs));
    report(3, "risk-neutral identity", &mut risk_neutral_identity);
    report(4, "KL risk-neutral limit", &mut kl_limit);
    report(5, "monotone gap trends", &mut gap_trends);
    report(6, "upper-bound stabilization", &mut stabilization);
    report(7, "risk-measure calculus", &mut risk_calculus);
    report(8, "Monte-Carlo estimator", &mut monte_carlo);
    report(9, "Q-factor variant", &mut qfactor);
    report(10, "determinism", &mut determinism);

    println!("{failed} criteria failed");
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
