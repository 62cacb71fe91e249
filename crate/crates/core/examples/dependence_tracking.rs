//! A consumer region reads what an uncommitted producer wrote. ASAP records
//! the dependence and holds the consumer's commit until the producer's.

use asapsim::asap::{Asap, AsapOptions};
use asapsim::machine::{run, EventKind, MachineConfig};
use asapsim::trace::parse_trace;

const TRACE: &str = "
T0 LOCK 0
T0 BEGIN
T0 ST 0x10000 0 42
T0 ST 0x10100 0 43
T0 END
T0 UNLOCK 0
T1 LOCK 0
T1 BEGIN
T1 LD 0x10000 0
T1 ST 0x10040 0 1
T1 END
T1 UNLOCK 0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trace = parse_trace(TRACE)?;
    let cfg = MachineConfig::default();
    let asap = Asap::new(2, cfg.log_capacity_entries_per_thread, AsapOptions::all());
    let out = run(&trace, Box::new(asap), &cfg)?;
    for e in out.events.events() {
        match e.kind {
            EventKind::RegionEnd => println!("{:>5}  {} ends", e.cycle, e.region.unwrap()),
            EventKind::DepEdge => println!(
                "{:>5}  {} depends on {}",
                e.cycle,
                e.region.unwrap(),
                e.peer.unwrap()
            ),
            EventKind::Commit => println!("{:>5}  {} commits", e.cycle, e.region.unwrap()),
            _ => {}
        }
    }
    println!("threads finished at cycle {}", out.metrics.total_cycles);
    Ok(())
}
