//! Workload representation: per-thread instruction streams over persistent
//! cache lines, the text format, the validator and the benchmark generators.

mod generate;
mod parse;
mod validate;

use std::fmt;

pub use generate::{generate, WorkloadKind, WorkloadSpec, WorkloadSpecError};
pub use parse::{parse_trace, render, TraceError};
pub use validate::{validate, Violation};

/// Number of 8-byte words in a 64-byte cache line.
pub const WORDS_PER_LINE: usize = 8;

/// Contents of one cache line.
pub type Words = [u64; WORDS_PER_LINE];

pub type ThreadId = usize;
pub type LockId = u32;

/// A persistent cache-line number (byte address >> 6).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Line(pub u64);

impl Line {
    pub fn from_byte_addr(addr: u64) -> Self {
        Line(addr >> 6)
    }

    pub fn byte_addr(self) -> u64 {
        self.0 << 6
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Identity of an atomic region: its thread and its 0-based position among
/// that thread's regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionId {
    pub thread: ThreadId,
    pub seq: u64,
}

impl RegionId {
    pub fn new(thread: ThreadId, seq: u64) -> Self {
        RegionId { thread, seq }
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}.{}", self.thread, self.seq)
    }
}

/// One instruction of a simulated thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instr {
    Begin,
    End,
    Store { line: Line, word: u8, value: u64 },
    Load { line: Line, word: u8 },
    Lock(LockId),
    Unlock(LockId),
    Nop(u32),
}

impl Instr {
    pub fn line(&self) -> Option<Line> {
        match *self {
            Instr::Store { line, .. } | Instr::Load { line, .. } => Some(line),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub thread: ThreadId,
    pub kind: Instr,
}

/// Per-thread instruction streams. The global interleaving is not part of
/// the trace; the simulator derives it from timing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    streams: Vec<Vec<Instr>>,
}

impl Trace {
    pub fn new(streams: Vec<Vec<Instr>>) -> Self {
        Trace { streams }
    }

    pub fn thread_count(&self) -> usize {
        self.streams.len()
    }

    pub fn stream(&self, thread: ThreadId) -> &[Instr] {
        &self.streams[thread]
    }

    pub fn streams(&self) -> &[Vec<Instr>] {
        &self.streams
    }

    pub fn is_empty(&self) -> bool {
        self.streams.iter().all(|s| s.is_empty())
    }

    pub fn events(&self) -> impl Iterator<Item = TraceEvent> + '_ {
        self.streams
            .iter()
            .enumerate()
            .flat_map(|(thread, s)| s.iter().map(move |&kind| TraceEvent { thread, kind }))
    }

    /// Number of `Begin` markers in a thread's stream.
    pub fn region_count(&self, thread: ThreadId) -> usize {
        self.streams[thread]
            .iter()
            .filter(|i| matches!(i, Instr::Begin))
            .count()
    }

    pub fn total_regions(&self) -> usize {
        (0..self.thread_count()).map(|t| self.region_count(t)).sum()
    }

    /// Splits every thread's stream into its atomic regions. Instructions
    /// outside regions are skipped; a region left open at the end of the
    /// stream is included as-is.
    pub fn regions(&self) -> Vec<RegionBody> {
        let mut out = Vec::new();
        for (thread, stream) in self.streams.iter().enumerate() {
            let mut seq = 0u64;
            let mut current: Option<RegionBody> = None;
            for instr in stream {
                match instr {
                    Instr::Begin => {
                        if let Some(r) = current.take() {
                            out.push(r);
                        }
                        current = Some(RegionBody {
                            id: RegionId::new(thread, seq),
                            accesses: Vec::new(),
                        });
                        seq += 1;
                    }
                    Instr::End => {
                        if let Some(r) = current.take() {
                            out.push(r);
                        }
                    }
                    Instr::Store { .. } | Instr::Load { .. } => {
                        if let Some(r) = current.as_mut() {
                            r.accesses.push(*instr);
                        }
                    }
                    _ => {}
                }
            }
            if let Some(r) = current.take() {
                out.push(r);
            }
        }
        out
    }
}

/// The loads and stores of one atomic region, in program order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionBody {
    pub id: RegionId,
    pub accesses: Vec<Instr>,
}

impl RegionBody {
    pub fn stores(&self) -> impl Iterator<Item = (Line, usize, u64)> + '_ {
        self.accesses.iter().filter_map(|i| match *i {
            Instr::Store { line, word, value } => Some((line, word as usize, value)),
            _ => None,
        })
    }

    pub fn writes_line(&self, line: Line) -> bool {
        self.stores().any(|(l, _, _)| l == line)
    }

    pub fn touches_line(&self, line: Line) -> bool {
        self.accesses.iter().any(|i| i.line() == Some(line))
    }
}
