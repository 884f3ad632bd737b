//! Writes the traceability matrix: `cargo run -p sosforge --example trace > docs/trace.md`.

fn main() {
    print!("{}", sosforge::docs::emit_trace_matrix());
}
