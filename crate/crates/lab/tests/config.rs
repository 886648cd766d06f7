use mfl_lab::config::{ExperimentKind, ExperimentPlan, InitSpec};
use mfl_lab::LabError;

const MINIMAL: &str = r#"
kind = "train_single"
[task]
d = 8
k = 2
link = { kind = "parity" }
input_law = "rademacher_cube"
covariance = { kind = "isotropic" }
direction_policy = { kind = "coordinate" }
"#;

#[test]
fn minimal_config_fills_defaults() {
    let plan = ExperimentPlan::from_toml(MINIMAL).unwrap();
    assert_eq!(plan.kind, ExperimentKind::TrainSingle);
    assert_eq!(plan.seeds, vec![0]);
    assert_eq!(plan.network.m, 256);
    assert_eq!(plan.network.init, InitSpec::Gaussian { std: None });
    assert_eq!(plan.dynamics.eval_every, 100);
    assert_eq!(plan.dynamics.eta, None);
    assert_eq!(plan.data.n_test, 4096);
}

#[test]
fn canonical_config_round_trips() {
    let plan = ExperimentPlan::from_toml(MINIMAL).unwrap();
    let again = ExperimentPlan::from_toml(&plan.to_toml()).unwrap();
    assert_eq!(plan, again);
    for f in std::fs::read_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")).unwrap() {
        let text = std::fs::read_to_string(f.unwrap().path()).unwrap();
        let p = ExperimentPlan::from_toml(&text).unwrap();
        assert_eq!(ExperimentPlan::from_toml(&p.to_toml()).unwrap(), p);
    }
}

#[test]
fn misspelled_key_is_named() {
    let text = MINIMAL.replace("[task]", "[dynamics]\netta = 0.1\n[task]");
    match ExperimentPlan::from_toml(&text) {
        Err(LabError::Parse(msg)) => assert!(msg.contains("etta"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_values_name_their_key() {
    let cases = [
        ("[network]\nm = 0\n", "network.m"),
        ("[data]\nn_train = 0\n", "data.n_train"),
        ("seeds = [1, 1]\n", "seeds"),
        ("[network]\nteacher_m = 3\n", "network.teacher_m"),
        ("[dynamics]\neval_every = 0\n", "dynamics.eval_every"),
    ];
    for (extra, key) in cases {
        let text = if extra.starts_with('[') { format!("{MINIMAL}\n{extra}") } else { format!("{extra}{MINIMAL}") };
        match ExperimentPlan::from_toml(&text) {
            Err(LabError::Config { key: k, .. }) => assert_eq!(k, key),
            other => panic!("{extra}: {other:?}"),
        }
    }
}

#[test]
fn sweep_grids_must_be_populated() {
    let text = MINIMAL.replace("train_single", "sample_complexity")
        + "[grid]\nn = [0]\n[[grid.arms]]\nlabel = \"a\"\ncovariance = { kind = \"isotropic\" }\n";
    match ExperimentPlan::from_toml(&text) {
        Err(LabError::Config { key, .. }) => assert_eq!(key, "grid.n"),
        other => panic!("{other:?}"),
    }
    let text = MINIMAL.replace("train_single", "phase_grid");
    assert!(ExperimentPlan::from_toml(&text).is_err());
}
