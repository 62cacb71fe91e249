//! Runs one generated workload under ASAP and prints its metrics.
//!
//!     cargo run --example run_scheme -- kind=hashmap,threads=2,regions=8

use asapsim::asap::AsapOptions;
use asapsim::machine::{run, MachineConfig};
use asapsim::schemes::SchemeKind;
use asapsim::trace::{generate, WorkloadSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec: WorkloadSpec = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "kind=swap,threads=2,regions=8".into())
        .parse()?;
    let trace = generate(&spec);
    let cfg = MachineConfig::default();
    let scheme = SchemeKind::Asap.build(
        trace.thread_count(),
        cfg.log_capacity_entries_per_thread,
        AsapOptions::all(),
    );
    let out = run(&trace, scheme, &cfg)?;
    let m = &out.metrics;
    println!("{spec}");
    println!("cycles            {}", m.total_cycles);
    println!("regions committed {}", m.regions_committed);
    println!(
        "pm writes         log={} data={} commit={} evict={}",
        m.pm_writes.log, m.pm_writes.data, m.pm_writes.commit, m.pm_writes.eviction
    );
    println!(
        "end-to-commit     mean {:.1} max {} cycles",
        m.commit_latency.mean(),
        m.commit_latency.max()
    );
    Ok(())
}
