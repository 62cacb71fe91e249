//! Generates a trace, validates it, and prints it in the text format.

use asapsim::trace::{generate, parse_trace, render, validate, WorkloadKind, WorkloadSpec};

fn main() {
    let spec = WorkloadSpec {
        threads: 2,
        regions: 2,
        stores_per_region: 2,
        ..WorkloadSpec::new(WorkloadKind::Queue)
    };
    let trace = generate(&spec);
    validate(&trace).expect("generated traces are well formed");
    let text = render(&trace);
    assert_eq!(parse_trace(&text).unwrap(), trace);
    println!("# {spec}");
    print!("{text}");
}
