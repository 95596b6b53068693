use proptest::prelude::*;
use risksddp::model::{
    derive_seed, generate_hydrothermal, sample_path, tiny_corpus, HydroParams, ModelError, SocProblem,
};

#[test]
fn corpus_round_trips_through_json() {
    for (name, p) in tiny_corpus() {
        let text = p.to_json_string();
        let back = SocProblem::from_json_str(&text).unwrap();
        assert_eq!(back, p, "{name}");
        assert_eq!(back.to_json_string(), text, "{name}");
    }
}

#[test]
fn hydro_instance_round_trips_through_a_file() {
    let p = generate_hydrothermal(&HydroParams { stages: 4, ..HydroParams::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hydro.json");
    p.save(&path).unwrap();
    assert_eq!(SocProblem::load(&path).unwrap(), p);
}

#[test]
fn unknown_keys_and_bad_probabilities_are_rejected() {
    let (_, p) = tiny_corpus().remove(0);
    let mut doc: serde_json::Value = serde_json::from_str(&p.to_json_string()).unwrap();
    doc["stage_data"][0]["surprise"] = serde_json::json!(1);
    let err = SocProblem::from_json_str(&doc.to_string()).unwrap_err();
    assert!(matches!(&err, ModelError::Schema { path, .. } if path.starts_with("stage_data[0]")), "{err}");

    let mut doc: serde_json::Value = serde_json::from_str(&p.to_json_string()).unwrap();
    doc["stage_data"][1]["realizations"][0]["prob"] = serde_json::json!(0.9);
    let err = SocProblem::from_json_str(&doc.to_string()).unwrap_err();
    assert!(matches!(err, ModelError::ProbabilitySum { stage: 1, .. }), "{err}");
}

#[test]
fn hydro_generation_is_deterministic_in_its_seed() {
    let a = generate_hydrothermal(&HydroParams::default()).unwrap();
    let b = generate_hydrothermal(&HydroParams::default()).unwrap();
    let c = generate_hydrothermal(&HydroParams { seed: 8, ..HydroParams::default() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sampled_frequencies_follow_the_probabilities() {
    let p = tiny_corpus().into_iter().find(|(n, _)| n == "inventory1-T3-N3").unwrap().1;
    let n = 60_000;
    let mut counts = [0usize; 3];
    for s in 0..n {
        counts[sample_path(&p, derive_seed(11, s)).indices[2]] += 1;
    }
    for (j, r) in p.stage(2).realizations.iter().enumerate() {
        let freq = counts[j] as f64 / n as f64;
        let sd = (r.prob * (1.0 - r.prob) / n as f64).sqrt();
        assert!((freq - r.prob).abs() <= 5.0 * sd, "realization {j}: {freq} vs {}", r.prob);
    }
}

proptest! {
    #[test]
    fn paths_depend_only_on_their_seed(seed in any::<u64>()) {
        let p = generate_hydrothermal(&HydroParams { stages: 5, ..HydroParams::default() }).unwrap();
        let a = sample_path(&p, seed);
        prop_assert_eq!(&a, &sample_path(&p, seed));
        prop_assert!(a.indices.iter().enumerate().all(|(t, &j)| j < p.num_realizations(t)));
    }

    #[test]
    fn derived_seeds_do_not_collide_across_streams(base in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(base, a), derive_seed(base, b));
    }
}
