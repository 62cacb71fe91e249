use asapsim::asap::{Asap, AsapOptions};
use asapsim::crashcheck::{CrashTest, Verdict};
use asapsim::machine::{
    audit, run, run_unchecked, EventKind, MachineConfig, PersistKind, RunOutput, SimError,
};
use asapsim::trace::{parse_trace, Line, RegionId};

fn cfg(latency: u64, banks: usize) -> MachineConfig {
    MachineConfig {
        pm_write_latency: latency,
        pm_banks: banks,
        ..MachineConfig::default()
    }
}

fn go(text: &str, cfg: &MachineConfig, opts: AsapOptions) -> RunOutput {
    let trace = parse_trace(text).unwrap();
    let asap = Asap::new(
        trace.thread_count(),
        cfg.log_capacity_entries_per_thread,
        opts,
    );
    let out = run(&trace, Box::new(asap), cfg).unwrap();
    assert_eq!(audit::violations(&out), Vec::<String>::new());
    assert_eq!(audit::end_stall(&out), 0);
    out
}

fn only(lpo: bool, coalesce: bool, drop: bool) -> AsapOptions {
    AsapOptions {
        opt_lpo_drop: lpo,
        opt_dpo_coalesce: coalesce,
        opt_dpo_drop: drop,
    }
}

fn edges(out: &RunOutput) -> Vec<(RegionId, RegionId)> {
    out.events
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::DepEdge)
        .map(|e| (e.region.unwrap(), e.peer.unwrap()))
        .collect()
}

fn count(out: &RunOutput, kind: PersistKind) -> usize {
    out.ops
        .iter()
        .filter(|o| o.kind == kind && o.complete_time.is_some())
        .count()
}

fn r(thread: usize, seq: u64) -> RegionId {
    RegionId::new(thread, seq)
}

fn word(out: &RunOutput, addr: u64, w: usize) -> u64 {
    out.image
        .data
        .get(&Line::from_byte_addr(addr))
        .map_or(0, |l| l[w])
}

#[test]
fn repeated_store_logs_once() {
    let text = "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 ST 0x10000 1 2\nT0 END\n";
    let on = go(text, &cfg(100, 4), AsapOptions::all());
    assert_eq!(count(&on, PersistKind::Lpo), 1);
    let off = go(text, &cfg(100, 4), AsapOptions::none());
    assert_eq!(count(&off, PersistKind::Lpo), 2);
    assert_eq!(word(&on, 0x10000, 1), 2);
}

#[test]
fn back_to_back_regions_get_a_control_edge() {
    let out = go(
        "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 END\nT0 BEGIN\nT0 ST 0x10040 0 2\nT0 END\n",
        &cfg(100, 4),
        AsapOptions::all(),
    );
    assert_eq!(edges(&out), vec![(r(0, 1), r(0, 0))]);
}

const PRODUCER: &str = "T0 LOCK 0\nT0 BEGIN\nT0 ST 0x10000 0 5\nT0 END\nT0 UNLOCK 0\n";

#[test]
fn consumer_load_depends_on_uncommitted_producer() {
    let text =
        format!("{PRODUCER}T1 NOP 2\nT1 LOCK 0\nT1 BEGIN\nT1 LD 0x10000 0\nT1 END\nT1 UNLOCK 0\n");
    let out = go(&text, &cfg(100, 4), AsapOptions::all());
    assert_eq!(edges(&out), vec![(r(1, 0), r(0, 0))]);
    let commits: Vec<RegionId> = out
        .events
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::Commit)
        .map(|e| e.region.unwrap())
        .collect();
    assert_eq!(commits, vec![r(0, 0), r(1, 0)]);
}

#[test]
fn store_to_line_of_uncommitted_writer_adds_edge() {
    let text = format!(
        "{PRODUCER}T1 NOP 2\nT1 LOCK 0\nT1 BEGIN\nT1 ST 0x10000 1 6\nT1 END\nT1 UNLOCK 0\n"
    );
    let out = go(&text, &cfg(100, 4), AsapOptions::all());
    assert_eq!(edges(&out), vec![(r(1, 0), r(0, 0))]);
}

#[test]
fn no_edge_for_fresh_or_committed_lines() {
    let fresh = go(
        "T0 BEGIN\nT0 LD 0x10000 0\nT0 ST 0x10040 0 1\nT0 END\n",
        &cfg(100, 4),
        AsapOptions::all(),
    );
    assert!(edges(&fresh).is_empty());

    let text = format!(
        "{PRODUCER}T1 NOP 1000\nT1 LOCK 0\nT1 BEGIN\nT1 LD 0x10000 0\nT1 END\nT1 UNLOCK 0\n"
    );
    let late = go(&text, &cfg(100, 4), AsapOptions::all());
    assert!(edges(&late).is_empty());
}

// One bank, so A's data write is still queued behind its log write when
// B stores the same line.
const TWO_WRITERS: &str =
    "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 END\nT0 BEGIN\nT0 ST 0x10000 0 2\nT0 END\n";

#[test]
fn coalescing_serves_both_regions_with_one_write() {
    let out = go(TWO_WRITERS, &cfg(100, 1), only(true, true, false));
    assert_eq!(out.metrics.pm_writes.data, 1);
    assert_eq!(
        out.events
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::OpCoalesce)
            .count(),
        1
    );
    assert_eq!(word(&out, 0x10000, 0), 2);
    assert_eq!(out.metrics.regions_committed, 2);

    let none = go(TWO_WRITERS, &cfg(100, 1), AsapOptions::none());
    assert_eq!(none.metrics.pm_writes.data, 2);
}

#[test]
fn dropping_moves_the_obligation_to_the_next_write() {
    let out = go(TWO_WRITERS, &cfg(100, 1), only(true, false, true));
    assert_eq!(out.metrics.pm_writes.data, 1);
    assert_eq!(
        out.events
            .events()
            .iter()
            .filter(|e| e.kind == EventKind::OpDrop)
            .count(),
        1
    );
    assert_eq!(word(&out, 0x10000, 0), 2);
}

#[test]
fn chain_of_three_writers_costs_one_data_write() {
    let text = "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 END\n\
                T0 BEGIN\nT0 ST 0x10000 0 2\nT0 END\n\
                T0 BEGIN\nT0 ST 0x10000 0 3\nT0 END\n";
    for opts in [only(true, false, true), AsapOptions::all()] {
        let out = go(text, &cfg(100, 1), opts);
        assert_eq!(out.metrics.pm_writes.data, 1, "{opts:?}");
        assert_eq!(word(&out, 0x10000, 0), 3);
        assert_eq!(out.metrics.regions_committed, 3);
    }
}

#[test]
fn in_service_write_is_not_dropped() {
    let text = "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 END\nT0 NOP 150\n\
                T0 BEGIN\nT0 ST 0x10000 0 2\nT0 END\n";
    let out = go(text, &cfg(100, 1), AsapOptions::all());
    assert_eq!(out.metrics.pm_writes.data, 2);
    assert_eq!(word(&out, 0x10000, 0), 2);
}

// A writes four lines that share a bank; B only reads one of them and
// writes a line on another bank, so B's own persists finish first.
const CASCADE: &str = "T0 LOCK 0\nT0 BEGIN\n\
    T0 ST 0x10080 0 1\nT0 ST 0x10180 0 1\nT0 ST 0x10280 0 1\nT0 ST 0x10380 0 1\n\
    T0 END\nT0 UNLOCK 0\n\
    T1 NOP 8\nT1 LOCK 0\nT1 BEGIN\nT1 LD 0x10080 0\nT1 ST 0x10040 0 9\nT1 END\nT1 UNLOCK 0\n";

#[test]
fn commit_cascades_from_producer_to_consumer() {
    let text = CASCADE;
    let out = go(text, &cfg(100, 4), AsapOptions::all());
    let mark = |reg: RegionId| {
        out.ops
            .iter()
            .find(|o| o.kind == PersistKind::CommitMark && o.region == Some(reg))
            .unwrap()
            .clone()
    };
    let (a, b) = (mark(r(0, 0)), mark(r(1, 0)));
    let b_data = out
        .ops
        .iter()
        .filter(|o| o.kind == PersistKind::Dpo && o.obligations.contains(&r(1, 0)))
        .filter_map(|o| o.complete_time)
        .max()
        .unwrap();
    assert!(b_data < a.complete_time.unwrap());
    assert_eq!(b.issue_time, a.complete_time.unwrap());
}

#[test]
fn crash_between_consumer_persists_and_producer_commit_rolls_back_both() {
    let text = CASCADE;
    let trace = parse_trace(text).unwrap();
    let report = CrashTest::new(&trace, asapsim::schemes::SchemeKind::Asap)
        .config(cfg(100, 4))
        .run()
        .unwrap();
    assert!(report.passed());
    let out = report.run.as_ref().unwrap();
    let b_data = out
        .ops
        .iter()
        .filter(|o| o.kind == PersistKind::Dpo && o.obligations.contains(&r(1, 0)))
        .filter_map(|o| o.complete_time)
        .max()
        .unwrap();
    let image = out.crash_snapshot(b_data);
    let rec = asapsim::crashcheck::recover_undo(&image).unwrap();
    assert!(rec.committed.is_empty());
    assert!(rec.rolled_back.contains(&r(0, 0)) && rec.rolled_back.contains(&r(1, 0)));
    assert!(rec.recovered.data_state().is_empty());
}

// Each thread writes the line the other wrote first, with no lock.
const RACY: &str = "T0 BEGIN\nT0 ST 0x10000 0 1\nT0 NOP 10\nT0 ST 0x10040 0 1\nT0 END\n\
                    T1 BEGIN\nT1 NOP 3\nT1 ST 0x10040 0 2\nT1 ST 0x10000 0 2\nT1 END\n";

#[test]
fn racy_trace_is_rejected_or_aborts_with_a_cycle() {
    let trace = parse_trace(RACY).unwrap();
    let c = cfg(100, 4);
    let asap = || {
        Box::new(Asap::new(
            2,
            c.log_capacity_entries_per_thread,
            AsapOptions::all(),
        ))
    };
    assert!(matches!(
        run(&trace, asap(), &c),
        Err(SimError::InvalidTrace(_))
    ));
    match run_unchecked(&trace, asap(), &c) {
        Err(SimError::DependenceCycle { regions, .. }) => {
            assert!(regions.contains(&r(0, 0)) && regions.contains(&r(1, 0)));
        }
        other => panic!("expected a dependence cycle, got {other:?}"),
    }
    let report = CrashTest::new(&trace, asapsim::schemes::SchemeKind::Asap)
        .config(c)
        .unchecked()
        .run()
        .unwrap();
    assert!(!report.passed());
    assert!(report.count(Verdict::Aborted) + report.count(Verdict::Fail) > 0);
}
