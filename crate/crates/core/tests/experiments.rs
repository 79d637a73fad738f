use oscillab::experiments::{corpus, run, Context, ExperimentConfig, FunctionSpec, Setup};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

const SMALL: &str = r#"{
  "seed": 5,
  "scenarios": [
    { "id": "norms", "kind": "bmo", "grid": { "halfwidth": 16, "spacing": 0.0625 },
      "functions": ["zero", "constant_one", "narrow_bump", "jittered_bumps"] },
    { "id": "slope", "kind": "shen_rho", "dim": 1, "epsilon": 1.5, "samples": 7 }
  ]
}"#;

#[test]
fn bundles_are_deterministic() {
    let a = run(&config(SMALL)).unwrap().summary_json();
    let b = run(&config(SMALL)).unwrap().summary_json();
    assert_eq!(a, b);
}

#[test]
fn seed_changes_only_the_jittered_member() {
    let a = run(&config(SMALL)).unwrap();
    let b = run(&config(&SMALL.replace("\"seed\": 5", "\"seed\": 6"))).unwrap();
    let ta = &a.scenarios[0].summary["members"];
    let tb = &b.scenarios[0].summary["members"];
    assert_eq!(ta[2], tb[2]);
    assert_ne!(ta[3], tb[3]);
}

#[test]
fn config_hash_ignores_formatting() {
    let a = config(SMALL).sha256();
    let b = config(&SMALL.replace('\n', " ").replace("  ", " ")).sha256();
    assert_eq!(a, b);
    assert_eq!(a.len(), 64);
}

#[test]
fn duplicate_ids_are_rejected() {
    let text = r#"{"scenarios":[{"id":"a","kind":"shen_rho","epsilon":1.5},{"id":"a","kind":"shen_rho","epsilon":1.5}]}"#;
    assert!(run(&config(text)).unwrap_err().is_config());
}

#[test]
fn missing_parameters_are_config_errors() {
    let text = r#"{"scenarios":[{"id":"a","kind":"shen_rho"}]}"#;
    assert!(run(&config(text)).unwrap_err().is_config());
}

#[test]
fn corpus_functions_are_finite_and_jitter_is_reproducible() {
    let setup: Setup = serde_json::from_str(r#"{"grid":{"halfwidth":32,"spacing":0.0625}}"#).unwrap();
    let ctx = Context::new(&setup, 1).unwrap();
    for (name, spec) in corpus() {
        let f = ctx.function(&spec).unwrap();
        assert!(f.values().iter().all(|v| v.is_finite()), "{name}");
    }
    let spec = FunctionSpec::JitteredBumps { count: 4, spread: 8.0, width: 0.5 };
    assert_eq!(ctx.function(&spec).unwrap(), ctx.function(&spec).unwrap());
    let other = Context::new(&setup, 2).unwrap();
    assert_ne!(ctx.function(&spec).unwrap(), other.function(&spec).unwrap());
}

#[test]
fn lacunary_member_places_unit_mass_bumps_at_powers_of_three() {
    let setup: Setup = serde_json::from_str(r#"{"grid":{"halfwidth":32,"spacing":0.03125}}"#).unwrap();
    let ctx = Context::new(&setup, 0).unwrap();
    let f = ctx.function(&FunctionSpec::Lacunary { k_max: 3 }).unwrap();
    assert!((f.integral() - 3.0).abs() < 1e-12);
    let g = f.grid();
    for k in 0..g.len() {
        let x = g.coord(k);
        if f.values()[k] != 0.0 {
            assert!([3.0, 9.0, 27.0].iter().any(|c| (x - c).abs() < 1.0), "mass at {x}");
        }
    }
}
