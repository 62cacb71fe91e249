use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Instr, Line, LockId, RegionId, ThreadId, Trace};

/// A broken trace invariant. `index` is the instruction position within the
/// thread's stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NestedRegion {
        thread: ThreadId,
        index: usize,
    },
    EndWithoutBegin {
        thread: ThreadId,
        index: usize,
    },
    UnterminatedRegion {
        thread: ThreadId,
    },
    AccessOutsideRegion {
        thread: ThreadId,
        index: usize,
    },
    LockInsideRegion {
        thread: ThreadId,
        index: usize,
        lock: LockId,
    },
    RecursiveLock {
        thread: ThreadId,
        index: usize,
        lock: LockId,
    },
    UnlockNotInnermost {
        thread: ThreadId,
        index: usize,
        lock: LockId,
    },
    LocksHeldAtExit {
        thread: ThreadId,
        locks: Vec<LockId>,
    },
    /// Two regions on different threads touch `line` (at least one of them
    /// storing to it) without holding a common lock.
    UnsynchronizedConflict {
        line: Line,
        first: RegionId,
        second: RegionId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NestedRegion { thread, index } => {
                write!(f, "T{thread}[{index}]: nested region")
            }
            Violation::EndWithoutBegin { thread, index } => {
                write!(f, "T{thread}[{index}]: END without BEGIN")
            }
            Violation::UnterminatedRegion { thread } => {
                write!(f, "T{thread}: region not closed by END")
            }
            Violation::AccessOutsideRegion { thread, index } => {
                write!(f, "T{thread}[{index}]: load/store outside a region")
            }
            Violation::LockInsideRegion {
                thread,
                index,
                lock,
            } => write!(f, "T{thread}[{index}]: lock {lock} changes inside a region"),
            Violation::RecursiveLock {
                thread,
                index,
                lock,
            } => write!(f, "T{thread}[{index}]: lock {lock} already held"),
            Violation::UnlockNotInnermost {
                thread,
                index,
                lock,
            } => write!(
                f,
                "T{thread}[{index}]: unlock {lock} is not the innermost held lock"
            ),
            Violation::LocksHeldAtExit { thread, locks } => {
                write!(f, "T{thread}: locks {locks:?} still held at end of stream")
            }
            Violation::UnsynchronizedConflict {
                line,
                first,
                second,
            } => write!(
                f,
                "unsynchronized conflicting regions {first} and {second} on line {line}"
            ),
        }
    }
}

struct RegionAccess {
    id: RegionId,
    locks: BTreeSet<LockId>,
    writes: bool,
}

/// Checks every trace invariant, returning all violations found.
pub fn validate(trace: &Trace) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    // line -> every region touching it
    let mut by_line: BTreeMap<Line, Vec<RegionAccess>> = BTreeMap::new();

    for (thread, stream) in trace.streams().iter().enumerate() {
        let mut held: Vec<LockId> = Vec::new();
        let mut open: Option<RegionId> = None;
        let mut seq = 0u64;
        let mut touched: BTreeMap<Line, bool> = BTreeMap::new();

        let mut close = |id: RegionId, touched: &mut BTreeMap<Line, bool>, held: &[LockId]| {
            let locks: BTreeSet<LockId> = held.iter().copied().collect();
            for (line, writes) in std::mem::take(touched) {
                by_line.entry(line).or_default().push(RegionAccess {
                    id,
                    locks: locks.clone(),
                    writes,
                });
            }
        };

        for (index, instr) in stream.iter().enumerate() {
            match *instr {
                Instr::Begin => {
                    if let Some(id) = open.take() {
                        violations.push(Violation::NestedRegion { thread, index });
                        close(id, &mut touched, &held);
                    }
                    open = Some(RegionId::new(thread, seq));
                    seq += 1;
                }
                Instr::End => match open.take() {
                    Some(id) => close(id, &mut touched, &held),
                    None => violations.push(Violation::EndWithoutBegin { thread, index }),
                },
                Instr::Store { line, .. } | Instr::Load { line, .. } => {
                    if open.is_none() {
                        violations.push(Violation::AccessOutsideRegion { thread, index });
                    } else {
                        let w = matches!(instr, Instr::Store { .. });
                        *touched.entry(line).or_insert(false) |= w;
                    }
                }
                Instr::Lock(lock) => {
                    if open.is_some() {
                        violations.push(Violation::LockInsideRegion {
                            thread,
                            index,
                            lock,
                        });
                    }
                    if held.contains(&lock) {
                        violations.push(Violation::RecursiveLock {
                            thread,
                            index,
                            lock,
                        });
                    } else {
                        held.push(lock);
                    }
                }
                Instr::Unlock(lock) => {
                    if open.is_some() {
                        violations.push(Violation::LockInsideRegion {
                            thread,
                            index,
                            lock,
                        });
                    }
                    if held.last() == Some(&lock) {
                        held.pop();
                    } else {
                        violations.push(Violation::UnlockNotInnermost {
                            thread,
                            index,
                            lock,
                        });
                        if let Some(pos) = held.iter().position(|&l| l == lock) {
                            held.remove(pos);
                        }
                    }
                }
                Instr::Nop(_) => {}
            }
        }
        if let Some(id) = open.take() {
            violations.push(Violation::UnterminatedRegion { thread });
            close(id, &mut touched, &held);
        }
        if !held.is_empty() {
            violations.push(Violation::LocksHeldAtExit {
                thread,
                locks: held,
            });
        }
    }

    for (line, accesses) in &by_line {
        for (i, a) in accesses.iter().enumerate() {
            for b in &accesses[i + 1..] {
                if a.id.thread == b.id.thread || !(a.writes || b.writes) {
                    continue;
                }
                if a.locks.is_disjoint(&b.locks) {
                    violations.push(Violation::UnsynchronizedConflict {
                        line: *line,
                        first: a.id,
                        second: b.id,
                    });
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
