//! Every scheme over the default benchmark suite, as a table.

use asapsim::harness::{compare, suite, Settings};
use asapsim::schemes::SchemeKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let benches = suite("default")?;
    let cmp = compare(&benches, &SchemeKind::ALL, &Settings::default())?;
    print!("{}", cmp.to_table());
    if let Some(g) = cmp.geomean_cycle_ratio(SchemeKind::HwUndo, SchemeKind::Asap) {
        println!("\nASAP is {g:.2}x faster than HWUndo (geomean)");
    }
    Ok(())
}
