//! Acceptance criteria AC1-AC9. Prints one PASS/FAIL line per criterion
//! with the measured values, and exits nonzero if any fails.

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::time::Instant;

use asapsim::asap::AsapOptions;
use asapsim::crashcheck::{CrashMode, CrashTest};
use asapsim::harness::{self, compare, latency_sweep, run_one, suite, Benchmark, Settings};
use asapsim::machine::{audit, run, MachineConfig};
use asapsim::schemes::SchemeKind;
use asapsim::trace::{generate, Line, WorkloadKind, WorkloadSpec};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

const GUARANTEED: [SchemeKind; 4] = [
    SchemeKind::Sw,
    SchemeKind::HwUndo,
    SchemeKind::HwRedo,
    SchemeKind::Asap,
];

fn ac1_crash_consistency() -> Check {
    let benches = suite("small").map_err(|e| e.to_string())?;
    let (mut runs, mut cycles, mut images) = (0, 0u64, 0);
    for b in &benches {
        let t = &b.trace;
        let lines: BTreeSet<Line> = t.events().filter_map(|e| e.kind.line()).collect();
        if t.thread_count() > 3 || t.total_regions() > 8 || lines.len() > 8 {
            return Err(format!("{} exceeds the small-trace bounds", b.name));
        }
        for s in GUARANTEED {
            let rep = CrashTest::new(t, s)
                .mode(CrashMode::Exhaustive)
                .run()
                .map_err(|e| format!("{}: {e}", b.name))?;
            if !rep.passed() {
                let p = rep.first_failure().unwrap();
                return Err(format!("{} {s} at cycle {}: {}", b.name, p.cycle, p.detail));
            }
            runs += 1;
            cycles += rep.cycles_checked();
            images += rep.points.len();
        }
    }
    Ok(format!(
        "{} traces x {} schemes = {runs} sweeps, {cycles} crash cycles ({images} distinct images), 100% pass",
        benches.len(),
        GUARANTEED.len()
    ))
}

/// The 1000 seeded workloads of AC2, with a machine config varied per seed.
fn seeded(seed: u64) -> (WorkloadSpec, MachineConfig) {
    let kind = WorkloadKind::ALL[(seed % 5) as usize];
    let min = if kind == WorkloadKind::ProducerConsumer {
        2
    } else {
        1
    };
    let spr = 1 + (seed / 5 % 6) as usize;
    let spec = WorkloadSpec {
        kind,
        threads: (1 + (seed / 3 % 4) as usize).max(min),
        regions: 2 + (seed / 7 % 6) as usize,
        stores_per_region: spr,
        line_pool: 2 + (seed / 11 % 12) as usize,
        seed,
        think: (seed / 13 % 3) as u32,
    };
    let cfg = MachineConfig {
        pm_write_latency: [20, 150, 600][(seed % 3) as usize],
        pm_banks: 1 + (seed / 2 % 4) as usize,
        cache_capacity_lines: [2, 8, 1024][(seed / 17 % 3) as usize],
        log_capacity_entries_per_thread: [spr + 1, 4096][(seed / 19 % 2) as usize],
        ..MachineConfig::default()
    };
    (spec, cfg)
}

fn ac2_commit_order() -> Check {
    let (mut edges, mut regions) = (0, 0);
    for seed in 0..1000 {
        let (spec, cfg) = seeded(seed);
        let trace = generate(&spec);
        let asap = SchemeKind::Asap.build(
            trace.thread_count(),
            cfg.log_capacity_entries_per_thread,
            AsapOptions::all(),
        );
        let out = run(&trace, asap, &cfg).map_err(|e| format!("{spec}: {e}"))?;
        let bad = audit::commit_violations(&out);
        if let Some(v) = bad.first() {
            return Err(format!("{spec}: {} violations, first: {v}", bad.len()));
        }
        let stall = audit::end_stall(&out);
        if stall != 0 {
            return Err(format!("{spec}: end-of-region stall {stall} cycles"));
        }
        edges += out
            .events
            .events()
            .iter()
            .filter(|e| e.kind == asapsim::machine::EventKind::DepEdge)
            .count();
        regions += out.metrics.regions_committed;
    }
    Ok(format!(
        "1000 workloads, {regions} regions, {edges} dependence edges: 0 order violations, 0 end-stall cycles"
    ))
}

fn ac3_wal() -> Check {
    let mut traces: Vec<(String, asapsim::trace::Trace, MachineConfig)> = Vec::new();
    for b in suite("default")
        .and_then(|mut d| {
            d.extend(suite("small")?);
            Ok(d)
        })
        .map_err(|e| e.to_string())?
    {
        traces.push((b.name, b.trace, MachineConfig::default()));
    }
    for seed in 0..200 {
        let (spec, cfg) = seeded(seed);
        traces.push((spec.to_string(), generate(&spec), cfg));
    }
    let mut runs = 0;
    let mut dpos = 0;
    for (name, trace, cfg) in &traces {
        for s in GUARANTEED {
            let scheme = s.build(
                trace.thread_count(),
                cfg.log_capacity_entries_per_thread,
                AsapOptions::all(),
            );
            let out = run(trace, scheme, cfg).map_err(|e| format!("{name} {s}: {e}"))?;
            if let Some(v) = audit::wal_violations(&out).first() {
                return Err(format!("{name} {s}: {v}"));
            }
            runs += 1;
            dpos += out.metrics.pm_writes.data;
        }
    }
    Ok(format!("{runs} runs, {dpos} data writes: 0 WAL violations"))
}

struct Suite {
    benches: Vec<Benchmark>,
    settings: Settings,
    cmp: asapsim::harness::Comparison,
}

fn ac4_speedup(s: &Suite) -> Check {
    let g = s
        .cmp
        .geomean_cycle_ratio(SchemeKind::HwUndo, SchemeKind::Asap)
        .ok_or("undefined")?;
    let msg = format!("geomean cycles(HWUndo)/cycles(ASAP) = {g:.3} (need >= 1.2)");
    if g >= 1.2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac5_ideal(s: &Suite) -> Check {
    let g = s
        .cmp
        .geomean_cycle_ratio(SchemeKind::Np, SchemeKind::Asap)
        .ok_or("undefined")?;
    let msg = format!("geomean cycles(NP)/cycles(ASAP) = {g:.3} (need >= 0.85)");
    if g >= 0.85 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac6_traffic(s: &Suite) -> Check {
    let g = s
        .cmp
        .geomean_of(|b| s.cmp.traffic_vs_hwundo(b, SchemeKind::Asap))
        .ok_or("undefined")?;
    let none = AsapOptions::none();
    let singles = [
        (
            "lpo_drop",
            AsapOptions {
                opt_lpo_drop: true,
                ..none
            },
        ),
        (
            "dpo_coalesce",
            AsapOptions {
                opt_dpo_coalesce: true,
                ..none
            },
        ),
        (
            "dpo_drop",
            AsapOptions {
                opt_dpo_drop: true,
                ..none
            },
        ),
    ];
    let total = |b: &Benchmark, opts: AsapOptions| -> Result<u64, String> {
        let mut st = s.settings.clone();
        st.opts = opts;
        run_one(b, SchemeKind::Asap, &st)
            .map(|r| r.metrics.pm_writes.total())
            .map_err(|e| e.to_string())
    };
    for b in &s.benches {
        let base = total(b, none)?;
        for (name, opts) in singles {
            let with = total(b, opts)?;
            if with > base {
                return Err(format!(
                    "{}: enabling {name} raises PM writes {base} -> {with}",
                    b.name
                ));
            }
        }
    }
    let msg = format!(
        "geomean logging traffic ASAP/HWUndo = {g:.3} (need <= 0.7); each optimization alone never adds writes"
    );
    if g <= 0.7 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ac7_latency(s: &Suite) -> Check {
    let l = s.settings.machine.pm_write_latency;
    let lats = [l, 2 * l, 4 * l, 8 * l];
    let schemes = [SchemeKind::HwUndo, SchemeKind::Asap];
    let sweep =
        latency_sweep(&s.benches, &schemes, &lats, &s.settings).map_err(|e| e.to_string())?;
    let mut worst: Option<(String, f64, f64)> = None;
    for b in &s.benches {
        let hw = sweep
            .slowdown(&b.name, SchemeKind::HwUndo, l, 8 * l)
            .ok_or("undefined")?;
        let asap = sweep
            .slowdown(&b.name, SchemeKind::Asap, l, 8 * l)
            .ok_or("undefined")?;
        if asap >= hw {
            return Err(format!(
                "{}: ASAP slowdown {asap:.3} >= HWUndo {hw:.3}",
                b.name
            ));
        }
        if worst.as_ref().is_none_or(|w| asap / hw > w.1 / w.2) {
            worst = Some((b.name.clone(), asap, hw));
        }
    }
    let (name, a, h) = worst.unwrap();
    Ok(format!(
        "cycles(8L)/cycles(L), L={l}: ASAP < HWUndo on all {} benchmarks (closest: {name} {a:.3} vs {h:.3})",
        s.benches.len()
    ))
}

fn ac8_ordering(s: &Suite) -> Check {
    use SchemeKind::*;
    for b in &s.benches {
        let c = |k| s.cmp.cycles(&b.name, k).unwrap();
        let (np, asap, hwu, hwr, sw) = (c(Np), c(Asap), c(HwUndo), c(HwRedo), c(Sw));
        if !(np <= asap && asap <= hwu && hwu <= sw && hwr <= hwu) {
            return Err(format!(
                "{}: np={np} asap={asap} hwundo={hwu} sw={sw} hwredo={hwr}",
                b.name
            ));
        }
    }
    Ok(format!(
        "NP <= ASAP <= HWUndo <= SW and HWRedo <= HWUndo on all {} benchmarks",
        s.benches.len()
    ))
}

fn ac9_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let bin = env!("CARGO_BIN_EXE_asapsim");
    let cmds: [&[&str]; 6] = [
        &[
            "gen",
            "--workload",
            "kind=hashmap,threads=3,regions=6,seed=11",
        ],
        &[
            "run",
            "--scheme",
            "asap",
            "--workload",
            "kind=queue,threads=2,regions=6",
        ],
        &[
            "run", "--scheme", "hwredo", "--suite", "small", "--events", "EVENTS",
        ],
        &["compare", "--suite", "default"],
        &[
            "sweep",
            "--schemes",
            "hwundo,asap",
            "--latencies",
            "150,300",
            "--suite",
            "small",
        ],
        &[
            "crashtest",
            "--mode",
            "sampled",
            "--samples",
            "300",
            "--seed",
            "5",
            "--verdicts",
            "VERDICTS",
        ],
    ];
    for args in cmds {
        let mut outputs = Vec::new();
        for i in 0..2 {
            let ev = d.join(format!("events{i}.csv"));
            let vd = d.join(format!("verdicts{i}.csv"));
            let args: Vec<String> = args
                .iter()
                .map(|a| match *a {
                    "EVENTS" => ev.display().to_string(),
                    "VERDICTS" => vd.display().to_string(),
                    a => a.to_string(),
                })
                .collect();
            let o = Command::new(bin)
                .args(&args)
                .env_remove(harness::CONFIG_ENV)
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
            }
            let side = [ev, vd]
                .iter()
                .filter_map(|p| std::fs::read(p).ok())
                .collect::<Vec<_>>();
            outputs.push((o.stdout, side));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{args:?} differs between two runs"));
        }
    }
    Ok(format!(
        "{} commands each run twice: byte-identical output",
        cmds.len()
    ))
}

fn main() -> ExitCode {
    let settings = Settings::default();
    let suite_start = Instant::now();
    let benches = suite("default").expect("default suite");
    let cmp = compare(&benches, &SchemeKind::ALL, &settings).expect("suite runs");
    let suite_time = suite_start.elapsed();
    let s = Suite {
        benches,
        settings,
        cmp,
    };

    let checks: Vec<Criterion> = vec![
        (
            "AC1 crash consistency (exhaustive)",
            Box::new(ac1_crash_consistency),
        ),
        (
            "AC2 commit order + zero end stall",
            Box::new(ac2_commit_order),
        ),
        ("AC3 WAL invariant", Box::new(ac3_wal)),
        ("AC4 speedup over HWUndo", Box::new(|| ac4_speedup(&s))),
        ("AC5 proximity to ideal", Box::new(|| ac5_ideal(&s))),
        ("AC6 traffic reduction", Box::new(|| ac6_traffic(&s))),
        ("AC7 latency robustness", Box::new(|| ac7_latency(&s))),
        ("AC8 scheme ordering", Box::new(|| ac8_ordering(&s))),
        ("AC9 determinism", Box::new(ac9_determinism)),
    ];
    println!(
        "default suite: {} benchmarks x 5 schemes in {:.2?}",
        s.benches.len(),
        suite_time
    );
    let mut failed = 0;
    for (name, check) in &checks {
        let t = Instant::now();
        let res = check();
        let el = t.elapsed();
        match res {
            Ok(m) => println!("PASS {name}: {m} [{el:.2?}]"),
            Err(m) => {
                failed += 1;
                println!("FAIL {name}: {m} [{el:.2?}]");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
