use serde_json::Value;
use sosforge_wasm::{bounds_json, decompose_json, weights_json};

#[test]
fn weights_for_five() {
    let v: Value = serde_json::from_str(&weights_json(5).unwrap()).unwrap();
    assert_eq!(v["etas"], serde_json::json!(["1", "-2", "3"]));
    assert_eq!(v["qs"], serde_json::json!(["1/24", "1/30", "1/120"]));
    assert_eq!(v["pass"], Value::Bool(true));
    assert!(weights_json(4).is_err());
}

#[test]
fn bounds_rows() {
    let v: Value = serde_json::from_str(&bounds_json(3, 2).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["s_n"], "27");
    assert_eq!(rows[1]["lower"], "3/2");
    assert!(bounds_json(0, 2).is_err());
}

#[test]
fn planar_decomposition() {
    let spec = r#"{"dim": 2, "k": 2, "alpha": 1.0, "terms": [{"exps": [2, 2], "coef": "1"}, {"exps": [0, 0], "coef": "1"}]}"#;
    let v: Value = serde_json::from_str(&decompose_json(spec, 1.0, 0.05).unwrap()).unwrap();
    let classes = v["classes"].as_u64().unwrap();
    assert!((1..=27).contains(&classes));
    assert!(v["residual"].as_f64().unwrap() <= 1e-8 * (1.0 + v["fmax"].as_f64().unwrap()));
    assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    assert!(decompose_json(spec, 1.0, 1.7).is_ok());
    assert!(decompose_json(spec, -1.0, 0.05).is_err());
    assert!(decompose_json("{", 1.0, 0.05).is_err());
}

#[test]
fn line_decomposition_has_no_svg() {
    let spec = r#"{"dim": 1, "k": 2, "alpha": 1.0, "terms": [{"exps": [2], "coef": "1"}]}"#;
    let v: Value = serde_json::from_str(&decompose_json(spec, 5.0, 0.05).unwrap()).unwrap();
    assert_eq!(v["classes"], 2);
    assert!(v["svg"].is_null());
}
