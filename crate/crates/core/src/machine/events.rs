use std::fmt::Write as _;

use super::pm::{OpId, PersistKind};
use crate::trace::{Line, RegionId, ThreadId};

pub type Cycle = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    RegionBegin,
    RegionEnd,
    /// The thread retired its End instruction and moved on.
    EndRetire,
    Evict,
    LockAcquire,
    LockRelease,
    OpIssue,
    OpStart,
    OpComplete,
    OpDrop,
    OpCoalesce,
    /// `region` now depends on `peer`.
    DepEdge,
    Commit,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::RegionBegin => "begin",
            EventKind::RegionEnd => "end",
            EventKind::EndRetire => "end_retire",
            EventKind::Evict => "evict",
            EventKind::LockAcquire => "lock",
            EventKind::LockRelease => "unlock",
            EventKind::OpIssue => "issue",
            EventKind::OpStart => "start",
            EventKind::OpComplete => "complete",
            EventKind::OpDrop => "drop",
            EventKind::OpCoalesce => "coalesce",
            EventKind::DepEdge => "dep",
            EventKind::Commit => "commit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub cycle: Cycle,
    pub kind: EventKind,
    pub thread: Option<ThreadId>,
    pub region: Option<RegionId>,
    pub line: Option<Line>,
    pub bank: Option<usize>,
    pub op: Option<OpId>,
    pub persist: Option<PersistKind>,
    pub peer: Option<RegionId>,
}

impl Event {
    pub fn new(cycle: Cycle, kind: EventKind) -> Self {
        Event {
            cycle,
            kind,
            thread: None,
            region: None,
            line: None,
            bank: None,
            op: None,
            persist: None,
            peer: None,
        }
    }

    pub fn region(mut self, r: RegionId) -> Self {
        self.thread = Some(r.thread);
        self.region = Some(r);
        self
    }

    pub fn thread(mut self, t: ThreadId) -> Self {
        self.thread = Some(t);
        self
    }

    pub fn line(mut self, l: Line) -> Self {
        self.line = Some(l);
        self
    }

    pub fn peer(mut self, r: RegionId) -> Self {
        self.peer = Some(r);
        self
    }
}

/// Append-only record of everything observable that happened in a run.
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    /// Appends and returns the event's position, which orders events that
    /// share a cycle.
    pub fn push(&mut self, e: Event) -> usize {
        self.events.push(e);
        self.events.len() - 1
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|v| v.to_string()).unwrap_or_default()
        }
        let mut out = String::from("cycle,kind,thread,region,line,bank,op,persist,peer\n");
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.cycle,
                e.kind.name(),
                opt(e.thread),
                opt(e.region),
                opt(e.line),
                opt(e.bank),
                opt(e.op.map(|o| o.0)),
                opt(e.persist.map(|p| p.name())),
                opt(e.peer),
            );
        }
        out
    }
}
