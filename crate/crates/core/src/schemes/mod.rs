//! Persistence schemes. A scheme is a set of callbacks the machine invokes
//! at each region boundary, memory access, cache eviction and persist
//! completion. Schemes never touch the durable image directly; everything
//! they make durable goes through persist operations issued on the core.

mod hwredo;
mod np;
mod ring;
mod undo;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use hwredo::HwRedo;
pub use np::NoPersist;
pub use ring::LogRing;
pub use undo::SyncUndo;

use crate::asap::{Asap, AsapOptions};
use crate::machine::{Core, OpId, SimError};
use crate::trace::{Line, RegionId, ThreadId, Words};

/// What the issuing thread does after a callback.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The instruction retires now.
    Proceed,
    /// Block until every listed operation completes, then call again.
    Wait(Vec<OpId>),
    /// The thread's log ring is full. Block until
    /// [`Scheme::log_has_space`] reports room, then call again.
    LogFull,
}

/// Which recovery procedure a scheme's durable image needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Recovery {
    None,
    Undo,
    Redo,
}

/// Callback contract between the machine and a persistence scheme.
///
/// A callback that returns [`Outcome::Wait`] or [`Outcome::LogFull`] is
/// invoked again, with the same arguments, once the thread wakes; it must
/// pick up where it left off.
pub trait Scheme {
    fn name(&self) -> &'static str;

    fn recovery(&self) -> Recovery;

    fn on_begin(&mut self, _core: &mut Core, _region: RegionId) -> Outcome {
        Outcome::Proceed
    }

    fn on_store(
        &mut self,
        core: &mut Core,
        region: RegionId,
        line: Line,
        word: usize,
        value: u64,
    ) -> Outcome;

    fn on_load(
        &mut self,
        _core: &mut Core,
        _region: Option<RegionId>,
        _line: Line,
        _word: usize,
    ) -> Outcome {
        Outcome::Proceed
    }

    fn on_end(&mut self, core: &mut Core, region: RegionId) -> Outcome;

    /// A dirty line left the cache. `words` is its content.
    fn on_evict(&mut self, core: &mut Core, line: Line, words: Words);

    fn on_persist_complete(&mut self, core: &mut Core, op: OpId);

    fn log_has_space(&self, _thread: ThreadId) -> bool {
        true
    }

    /// Called once every thread retired and PM drained.
    fn finish(&mut self, _core: &mut Core) -> Result<(), SimError> {
        Ok(())
    }

    /// Explains why no thread can make progress, if the scheme knows.
    fn diagnose_stall(&self, _core: &Core) -> Option<SimError> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    Np,
    Sw,
    HwUndo,
    HwRedo,
    Asap,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Np,
        SchemeKind::Sw,
        SchemeKind::HwUndo,
        SchemeKind::HwRedo,
        SchemeKind::Asap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Np => "np",
            SchemeKind::Sw => "sw",
            SchemeKind::HwUndo => "hwundo",
            SchemeKind::HwRedo => "hwredo",
            SchemeKind::Asap => "asap",
        }
    }

    pub fn recovery(self) -> Recovery {
        match self {
            SchemeKind::Np => Recovery::None,
            SchemeKind::HwRedo => Recovery::Redo,
            _ => Recovery::Undo,
        }
    }

    /// Builds a fresh scheme instance. `opts` only affects ASAP.
    pub fn build(self, threads: usize, log_capacity: usize, opts: AsapOptions) -> Box<dyn Scheme> {
        match self {
            SchemeKind::Np => Box::new(scheme_np()),
            SchemeKind::Sw => Box::new(scheme_sw_undo(threads, log_capacity)),
            SchemeKind::HwUndo => Box::new(scheme_hw_undo(threads, log_capacity)),
            SchemeKind::HwRedo => Box::new(scheme_hw_redo(threads, log_capacity)),
            SchemeKind::Asap => Box::new(Asap::new(threads, log_capacity, opts)),
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown scheme `{0}` (expected np, sw, hwundo, hwredo or asap)")]
pub struct UnknownScheme(pub String);

impl FromStr for SchemeKind {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// No persistence: data reaches PM only through dirty evictions.
pub fn scheme_np() -> NoPersist {
    NoPersist
}

/// Software undo logging: every log write and every commit step is
/// synchronous.
pub fn scheme_sw_undo(threads: usize, log_capacity: usize) -> SyncUndo {
    SyncUndo::new(true, threads, log_capacity)
}

/// Hardware undo logging: log writes overlap the region, but the region end
/// waits for all its log and data writes and for its commit mark.
pub fn scheme_hw_undo(threads: usize, log_capacity: usize) -> SyncUndo {
    SyncUndo::new(false, threads, log_capacity)
}

/// Hardware redo logging: the region end waits for its log writes and
/// commit mark; data writes drain in the background.
pub fn scheme_hw_redo(threads: usize, log_capacity: usize) -> HwRedo {
    HwRedo::new(threads, log_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{run, EventKind, MachineConfig, PersistKind, RunOutput};
    use crate::trace::parse_trace;

    fn cfg100() -> MachineConfig {
        MachineConfig::default().with_write_latency(100)
    }

    fn go(kind: SchemeKind, text: &str, cfg: &MachineConfig) -> RunOutput {
        let trace = parse_trace(text).unwrap();
        let scheme = kind.build(
            trace.thread_count(),
            cfg.log_capacity_entries_per_thread,
            AsapOptions::all(),
        );
        run(&trace, scheme, cfg).unwrap()
    }

    fn complete_of(out: &RunOutput, kind: PersistKind) -> Vec<u64> {
        out.ops
            .iter()
            .filter(|o| o.kind == kind)
            .map(|o| o.complete_time.unwrap())
            .collect()
    }

    const ONE_STORE: &str = "T0 BEGIN\nT0 ST 0x10040 0 7\nT0 END\n";

    #[test]
    fn np_writes_only_evictions() {
        let out = go(SchemeKind::Np, ONE_STORE, &cfg100());
        assert_eq!(out.metrics.pm_writes.total(), 0);
        assert_eq!(out.metrics.total_cycles, 3);

        let cfg = MachineConfig {
            cache_capacity_lines: 1,
            ..cfg100()
        };
        let out = go(
            SchemeKind::Np,
            "T0 BEGIN\nT0 ST 0x10040 0 1\nT0 ST 0x10080 0 2\nT0 END\n",
            &cfg,
        );
        assert_eq!(out.metrics.pm_writes.eviction, 1);
        assert_eq!(out.metrics.pm_writes.logging(), 0);
    }

    #[test]
    fn sw_serializes_log_data_and_mark() {
        let out = go(SchemeKind::Sw, ONE_STORE, &cfg100());
        assert_eq!(complete_of(&out, PersistKind::Lpo), vec![101]);
        assert_eq!(complete_of(&out, PersistKind::Dpo), vec![202]);
        assert_eq!(complete_of(&out, PersistKind::CommitMark), vec![302]);
        assert_eq!(out.metrics.total_cycles, 303);
        assert!(out.metrics.total_cycles >= 300);
    }

    #[test]
    fn sw_logs_a_line_once_per_region() {
        let out = go(
            SchemeKind::Sw,
            "T0 BEGIN\nT0 ST 0x10040 0 1\nT0 ST 0x10040 1 2\nT0 END\n",
            &cfg100(),
        );
        assert_eq!(out.metrics.pm_writes.log, 1);
    }

    #[test]
    fn hwundo_overlaps_log_with_execution() {
        let out = go(SchemeKind::HwUndo, ONE_STORE, &cfg100());
        assert_eq!(complete_of(&out, PersistKind::Lpo), vec![101]);
        assert_eq!(complete_of(&out, PersistKind::Dpo), vec![201]);
        assert_eq!(complete_of(&out, PersistKind::CommitMark), vec![301]);
        assert_eq!(out.metrics.total_cycles, 302);
    }

    #[test]
    fn hwundo_beats_sw_on_wide_regions() {
        let mut text = String::from("T0 BEGIN\n");
        for i in 0..10 {
            text += &format!("T0 ST {:#x} 0 {}\n", 0x10000 + 64 * i, i + 1);
        }
        text += "T0 END\n";
        let sw = go(SchemeKind::Sw, &text, &cfg100());
        let hw = go(SchemeKind::HwUndo, &text, &cfg100());
        assert!(hw.metrics.total_cycles < sw.metrics.total_cycles);
    }

    #[test]
    fn hwredo_drains_data_after_commit() {
        let out = go(SchemeKind::HwRedo, ONE_STORE, &cfg100());
        assert_eq!(complete_of(&out, PersistKind::Lpo), vec![102]);
        assert_eq!(complete_of(&out, PersistKind::CommitMark), vec![202]);
        assert_eq!(complete_of(&out, PersistKind::Dpo), vec![302]);
        assert_eq!(out.metrics.total_cycles, 203);
        assert_eq!(out.image.data.get(&Line(0x401)).unwrap()[0], 7);
    }

    #[test]
    fn hwredo_logs_a_line_once_per_region() {
        let out = go(
            SchemeKind::HwRedo,
            "T0 BEGIN\nT0 ST 0x10040 0 1\nT0 NOP 500\nT0 ST 0x10040 1 2\nT0 END\n",
            &cfg100(),
        );
        assert_eq!(out.metrics.pm_writes.log, 1);
        assert_eq!(out.image.data.get(&Line(0x401)).unwrap()[..2], [1, 2]);
    }

    #[test]
    fn zero_store_regions_write_nothing() {
        for kind in SchemeKind::ALL {
            let out = go(kind, "T0 BEGIN\nT0 NOP 3\nT0 END\n", &cfg100());
            assert_eq!(out.metrics.pm_writes.total(), 0, "{kind}");
            assert_eq!(out.metrics.regions_committed, 1, "{kind}");
            assert_eq!(out.metrics.total_cycles, 5, "{kind}");
        }
    }

    #[test]
    fn hwundo_end_stall_covers_its_persists() {
        let out = go(SchemeKind::HwUndo, ONE_STORE, &cfg100());
        let retire = out
            .events
            .events()
            .iter()
            .find(|e| e.kind == EventKind::EndRetire)
            .unwrap()
            .cycle;
        let last = out
            .ops
            .iter()
            .filter_map(|o| o.complete_time)
            .max()
            .unwrap();
        assert!(retire >= last);
    }

    #[test]
    fn parse_scheme_names() {
        assert_eq!("HWUndo".parse::<SchemeKind>(), Ok(SchemeKind::HwUndo));
        assert!("undo".parse::<SchemeKind>().is_err());
    }
}
