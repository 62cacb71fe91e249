//! How each scheme's run time grows with PM write latency.

use asapsim::harness::{latency_sweep, suite, Settings};
use asapsim::schemes::SchemeKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let benches = suite("default")?;
    let settings = Settings::default();
    let schemes = [SchemeKind::HwUndo, SchemeKind::HwRedo, SchemeKind::Asap];
    let lats = [150, 300, 600, 1200];
    let sweep = latency_sweep(&benches, &schemes, &lats, &settings)?;
    println!(
        "{:<32} {:>8} {:>8} {:>8}",
        "cycles(1200)/cycles(150)", "hwundo", "hwredo", "asap"
    );
    for b in &benches {
        let s = |k| sweep.slowdown(&b.name, k, 150, 1200).unwrap_or(f64::NAN);
        println!(
            "{:<32} {:>8.2} {:>8.2} {:>8.2}",
            b.name,
            s(SchemeKind::HwUndo),
            s(SchemeKind::HwRedo),
            s(SchemeKind::Asap)
        );
    }
    let dir = std::env::temp_dir().join("asapsim-latency");
    let files = sweep.write_plot_data(&dir)?;
    println!("\n{} plot files in {}", files.len(), dir.display());
    Ok(())
}
