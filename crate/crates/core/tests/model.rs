use switchreach::catalog;
use switchreach::model::ModeState;
use switchreach::{SwitchedSystem, SystemSpec};

fn parse(text: &str) -> SystemSpec {
    serde_json::from_str(text).unwrap()
}

const BASE: &str = r#"{"state_dim":2,"control_dim":1,"horizon":1.0,"max_jumps":3,"modes":["0","1"],
    "initial_mode":"0","intensity":{"kind":"constant","rate":1.0},"kernel":{"kind":"swap"},
    "coefficients":{"kind":"constant","a":[[1.0,0.0],[0.0,0.0]],"b":[[0.0],[1.0]]}}"#;

#[test]
fn json_system_matches_the_catalog() {
    let from_json = SwitchedSystem::new(parse(BASE)).unwrap();
    let reference = catalog::example4(3);
    for seq in [vec![0], vec![0, 1], vec![0, 1, 0]] {
        let a = from_json.eval_coefficients(&seq, 0.4).unwrap();
        let b = reference.eval_coefficients(&seq, 0.4).unwrap();
        assert_eq!(a, b);
    }
    assert!(from_json.validate().passed());
    let zero = from_json.eval_coefficients(&[0, 1, 0, 1], 0.4).unwrap();
    assert_eq!(zero.a.amax() + zero.b.amax(), 0.0);
    assert_eq!(from_json.compensator_density(ModeState::Active(0), 0.2), vec![0.0, 1.0]);
    assert_eq!(from_json.compensator_density(ModeState::Cemetery, 0.2), vec![0.0, 0.0]);
}

#[test]
fn validation_failures_name_the_violation() {
    let fictive = SwitchedSystem::new(parse(
        &BASE.replace(r#"{"kind":"swap"}"#, r#"{"kind":"matrix","rows":[[1.0,0.0],[0.0,1.0]]}"#),
    ))
    .unwrap();
    let rep = fictive.validate();
    assert!(!rep.passed());
    assert!(rep.failures().iter().any(|c| c.name.contains("fictive")));

    let negative = SwitchedSystem::new(parse(&BASE.replace(r#""rate":1.0"#, r#""rate":-1.0"#))).unwrap();
    assert!(negative.validate().failures().iter().any(|c| c.name.contains("negative intensity")));
}

#[test]
fn shape_errors_abort_construction() {
    let bad = parse(&BASE.replace(r#""b":[[0.0],[1.0]]"#, r#""b":[[0.0,1.0],[1.0,0.0]]"#));
    assert!(matches!(SwitchedSystem::new(bad), Err(switchreach::Error::Shape(_))));
    assert!(serde_json::from_str::<SystemSpec>(&BASE.replace("\"horizon\"", "\"horizn\"")).is_err());
}
