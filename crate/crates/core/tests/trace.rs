use std::fs;
use std::path::Path;

use sosforge::docs::{emit_trace_matrix, trace_gaps, TRACE};

#[test]
fn every_anchor_has_one_row() {
    assert_eq!(trace_gaps(), vec![]);
}

#[test]
fn every_test_id_exists() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    for row in TRACE {
        let (file, name) = row.test.split_once("::").unwrap();
        let src = fs::read_to_string(root.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert!(
            src.contains(&format!("fn {name}(")),
            "{} not found in {file}",
            name
        );
    }
}

#[test]
fn committed_matrix_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/trace.md");
    let committed = fs::read_to_string(&path).expect("docs/trace.md missing");
    assert_eq!(
        committed,
        emit_trace_matrix(),
        "regenerate with the trace example"
    );
}
