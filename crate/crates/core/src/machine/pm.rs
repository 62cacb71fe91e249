//! Banked persistent memory: persist operations, per-bank FIFO service with
//! hold rules, and the durable image built from completed writes.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::events::{Cycle, Event, EventKind, EventLog};
use crate::trace::{Line, RegionId, ThreadId, Words};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PersistKind {
    /// Log persist: writes one log entry.
    Lpo,
    /// Data persist: writes a data line in place.
    Dpo,
    /// Writes a thread's persisted commit sequence register.
    CommitMark,
}

impl PersistKind {
    pub fn name(self) -> &'static str {
        match self {
            PersistKind::Lpo => "lpo",
            PersistKind::Dpo => "dpo",
            PersistKind::CommitMark => "mark",
        }
    }
}

/// Traffic category a completed write is charged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WriteCategory {
    Log,
    Data,
    Commit,
    Eviction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpState {
    Queued,
    Held,
    InService,
    Complete,
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    Words(Words),
    Seq(u64),
}

impl Payload {
    pub fn words(&self) -> Words {
        match self {
            Payload::Words(w) => *w,
            Payload::Seq(_) => [0; 8],
        }
    }
}

/// Base PM line of the per-thread log rings.
pub const LOG_BASE: u64 = 1 << 56;
/// Base PM line of the per-thread commit registers.
pub const MARK_BASE: u64 = 1 << 57;

#[derive(Clone, Debug)]
pub struct PersistOp {
    pub id: OpId,
    pub kind: PersistKind,
    pub category: WriteCategory,
    /// Data line covered (LPO/DPO); the register line for a CommitMark.
    pub line: Line,
    /// PM line physically written; selects the bank.
    pub addr: u64,
    pub bank: usize,
    pub thread: ThreadId,
    pub region: Option<RegionId>,
    /// Regions whose data-persist obligation this write discharges.
    pub obligations: Vec<RegionId>,
    pub payload: Payload,
    pub holds: Vec<OpId>,
    pub issue_time: Cycle,
    pub start_time: Option<Cycle>,
    pub complete_time: Option<Cycle>,
    pub state: OpState,
    /// Event-log positions, used to order events within a cycle.
    pub issue_event: usize,
    pub start_event: Option<usize>,
    pub complete_event: Option<usize>,
}

impl PersistOp {
    pub fn is_done(&self) -> bool {
        matches!(self.state, OpState::Complete | OpState::Dropped)
    }

    pub fn is_pending(&self) -> bool {
        matches!(self.state, OpState::Queued | OpState::Held)
    }
}

/// What a scheme asks the PM system to write.
#[derive(Clone, Debug)]
pub struct OpRequest {
    pub kind: PersistKind,
    pub category: WriteCategory,
    pub line: Line,
    pub addr: u64,
    pub thread: ThreadId,
    pub region: Option<RegionId>,
    pub obligations: Vec<RegionId>,
    pub payload: Payload,
    /// Hold the write until every incomplete LPO covering `line` completes.
    pub wal: bool,
    pub extra_holds: Vec<OpId>,
}

impl OpRequest {
    pub fn lpo(region: RegionId, line: Line, addr: u64, words: Words) -> Self {
        OpRequest {
            kind: PersistKind::Lpo,
            category: WriteCategory::Log,
            line,
            addr,
            thread: region.thread,
            region: Some(region),
            obligations: Vec::new(),
            payload: Payload::Words(words),
            wal: false,
            extra_holds: Vec::new(),
        }
    }

    pub fn dpo(thread: ThreadId, line: Line, words: Words, obligations: Vec<RegionId>) -> Self {
        OpRequest {
            kind: PersistKind::Dpo,
            category: WriteCategory::Data,
            line,
            addr: line.0,
            thread,
            region: obligations.first().copied(),
            obligations,
            payload: Payload::Words(words),
            wal: true,
            extra_holds: Vec::new(),
        }
    }

    pub fn eviction(thread: ThreadId, line: Line, words: Words) -> Self {
        OpRequest {
            category: WriteCategory::Eviction,
            wal: false,
            ..OpRequest::dpo(thread, line, words, Vec::new())
        }
    }

    pub fn mark(region: RegionId) -> Self {
        OpRequest {
            kind: PersistKind::CommitMark,
            category: WriteCategory::Commit,
            line: Line(MARK_BASE + region.thread as u64),
            addr: MARK_BASE + region.thread as u64,
            thread: region.thread,
            region: Some(region),
            obligations: Vec::new(),
            payload: Payload::Seq(region.seq),
            wal: false,
            extra_holds: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub region: RegionId,
    pub line: Line,
    pub words: Words,
    /// Position in the global persist order.
    pub stamp: u64,
}

/// Which regions' values the last in-place write of a line carried. Audit
/// metadata only; recovery never reads it to decide what to restore.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataOrigin {
    pub stamp: u64,
    pub regions: Vec<RegionId>,
}

/// The durable state: exactly the writes that completed.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PmImage {
    pub data: BTreeMap<Line, Words>,
    pub origin: BTreeMap<Line, DataOrigin>,
    pub logs: Vec<Vec<LogEntry>>,
    /// Highest persisted committed sequence per thread; -1 when none.
    pub commit_marks: Vec<i64>,
}

/// Data contents with all-zero lines removed, so that "never written" and
/// "written with zeros" compare equal.
pub type DataState = BTreeMap<Line, Words>;

pub fn normalize(data: &BTreeMap<Line, Words>) -> DataState {
    data.iter()
        .filter(|(_, w)| w.iter().any(|&x| x != 0))
        .map(|(l, w)| (*l, *w))
        .collect()
}

impl PmImage {
    pub fn new(threads: usize) -> Self {
        PmImage {
            data: BTreeMap::new(),
            origin: BTreeMap::new(),
            logs: vec![Vec::new(); threads],
            commit_marks: vec![-1; threads],
        }
    }

    pub fn data_state(&self) -> DataState {
        normalize(&self.data)
    }

    pub fn is_committed(&self, region: RegionId) -> bool {
        self.commit_marks
            .get(region.thread)
            .is_some_and(|&m| m >= region.seq as i64)
    }

    pub fn apply(&mut self, c: &Completion) {
        match &c.effect {
            Effect::Data {
                line,
                words,
                regions,
            } => {
                self.data.insert(*line, *words);
                self.origin.insert(
                    *line,
                    DataOrigin {
                        stamp: c.stamp,
                        regions: regions.clone(),
                    },
                );
            }
            Effect::Log { thread, entry } => self.logs[*thread].push(entry.clone()),
            Effect::Mark { thread, seq } => {
                let m = &mut self.commit_marks[*thread];
                *m = (*m).max(*seq as i64);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Effect {
    Data {
        line: Line,
        words: Words,
        regions: Vec<RegionId>,
    },
    Log {
        thread: ThreadId,
        entry: LogEntry,
    },
    Mark {
        thread: ThreadId,
        seq: u64,
    },
}

/// One completed write, in global persist order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub time: Cycle,
    pub stamp: u64,
    pub op: OpId,
    pub effect: Effect,
}

/// Rebuilds the image a crash at `now` would leave behind.
pub fn image_at(threads: usize, completions: &[Completion], now: Cycle) -> PmImage {
    let mut img = PmImage::new(threads);
    for c in completions.iter().take_while(|c| c.time <= now) {
        img.apply(c);
    }
    img
}

#[derive(Clone, Debug, Default)]
struct Bank {
    queue: VecDeque<OpId>,
    busy: Option<OpId>,
}

/// The PM service model: one FIFO per bank, one write in service per bank,
/// each taking `write_latency` cycles. A write whose holds are unmet is
/// skipped (Held) and later writes in the same bank may go first.
#[derive(Clone, Debug)]
pub struct PmSystem {
    threads: usize,
    write_latency: Cycle,
    banks: Vec<Bank>,
    ops: Vec<PersistOp>,
    last_lpo: HashMap<Line, OpId>,
    last_dpo: HashMap<Line, OpId>,
    open_lpos: HashMap<Line, Vec<OpId>>,
    image: PmImage,
    completions: Vec<Completion>,
}

impl PmSystem {
    pub fn new(threads: usize, banks: usize, write_latency: Cycle) -> Self {
        PmSystem {
            threads,
            write_latency,
            banks: vec![Bank::default(); banks],
            ops: Vec::new(),
            last_lpo: HashMap::new(),
            last_dpo: HashMap::new(),
            open_lpos: HashMap::new(),
            image: PmImage::new(threads),
            completions: Vec::new(),
        }
    }

    pub fn op(&self, id: OpId) -> &PersistOp {
        &self.ops[id.0]
    }

    pub fn ops(&self) -> &[PersistOp] {
        &self.ops
    }

    pub fn image(&self) -> &PmImage {
        &self.image
    }

    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }

    pub fn bank_of(&self, addr: u64) -> usize {
        (addr % self.banks.len() as u64) as usize
    }

    pub fn in_flight(&self) -> usize {
        self.ops.iter().filter(|o| !o.is_done()).count()
    }

    pub fn is_idle(&self) -> bool {
        self.banks
            .iter()
            .all(|b| b.busy.is_none() && b.queue.is_empty())
    }

    fn unmet(&self, holds: &[OpId]) -> bool {
        holds.iter().any(|h| !self.ops[h.0].is_done())
    }

    fn wal_holds(&self, line: Line) -> Vec<OpId> {
        self.open_lpos.get(&line).cloned().unwrap_or_default()
    }

    /// Enqueues a write on its bank. Ordering holds are added automatically:
    /// an LPO waits for the previous LPO of the same data line, a data write
    /// waits for the previous data write of the same line, and a WAL write
    /// waits for every incomplete LPO of its line.
    pub fn issue(&mut self, req: OpRequest, now: Cycle, log: &mut EventLog) -> OpId {
        let id = OpId(self.ops.len());
        let bank = self.bank_of(req.addr);
        let mut holds = req.extra_holds.clone();
        match req.kind {
            PersistKind::Lpo => {
                if let Some(&prev) = self.last_lpo.get(&req.line) {
                    if !self.ops[prev.0].is_done() {
                        holds.push(prev);
                    }
                }
                self.last_lpo.insert(req.line, id);
                self.open_lpos.entry(req.line).or_default().push(id);
            }
            PersistKind::Dpo => {
                if let Some(&prev) = self.last_dpo.get(&req.line) {
                    if !self.ops[prev.0].is_done() {
                        holds.push(prev);
                    }
                }
                if req.wal {
                    holds.extend(self.wal_holds(req.line));
                }
                self.last_dpo.insert(req.line, id);
            }
            PersistKind::CommitMark => {}
        }
        holds.sort();
        holds.dedup();
        let state = if self.unmet(&holds) {
            OpState::Held
        } else {
            OpState::Queued
        };
        let issue_event = log.push(Event {
            bank: Some(bank),
            op: Some(id),
            persist: Some(req.kind),
            thread: Some(req.thread),
            region: req.region,
            ..Event::new(now, EventKind::OpIssue).line(req.line)
        });
        self.ops.push(PersistOp {
            id,
            kind: req.kind,
            category: req.category,
            line: req.line,
            addr: req.addr,
            bank,
            thread: req.thread,
            region: req.region,
            obligations: req.obligations,
            payload: req.payload,
            holds,
            issue_time: now,
            start_time: None,
            complete_time: None,
            state,
            issue_event,
            start_event: None,
            complete_event: None,
        });
        self.banks[bank].queue.push_back(id);
        id
    }

    /// Marks a queued or held write as dropped and hands back its
    /// obligations. Writes already in service cannot be dropped.
    pub fn drop_op(&mut self, id: OpId, now: Cycle, log: &mut EventLog) -> Option<Vec<RegionId>> {
        let op = &mut self.ops[id.0];
        if !op.is_pending() {
            return None;
        }
        op.state = OpState::Dropped;
        let obligations = std::mem::take(&mut op.obligations);
        let (bank, line, thread, region) = (op.bank, op.line, op.thread, op.region);
        self.banks[bank].queue.retain(|&o| o != id);
        log.push(Event {
            bank: Some(bank),
            op: Some(id),
            persist: Some(PersistKind::Dpo),
            thread: Some(thread),
            region,
            ..Event::new(now, EventKind::OpDrop).line(line)
        });
        Some(obligations)
    }

    /// Folds more obligations into a pending data write and refreshes its
    /// payload. Returns false if the write already left the queue.
    pub fn coalesce(
        &mut self,
        id: OpId,
        words: Words,
        more: &[RegionId],
        now: Cycle,
        log: &mut EventLog,
    ) -> bool {
        if !self.ops[id.0].is_pending() {
            return false;
        }
        let line = self.ops[id.0].line;
        let extra = self.wal_holds(line);
        let op = &mut self.ops[id.0];
        op.payload = Payload::Words(words);
        op.obligations.extend_from_slice(more);
        for h in extra {
            if !op.holds.contains(&h) && h != id {
                op.holds.push(h);
            }
        }
        op.holds.sort();
        let (bank, thread, region) = (op.bank, op.thread, more.first().copied());
        if self.unmet(&self.ops[id.0].holds.clone()) {
            self.ops[id.0].state = OpState::Held;
        }
        log.push(Event {
            bank: Some(bank),
            op: Some(id),
            persist: Some(PersistKind::Dpo),
            thread: Some(thread),
            region,
            ..Event::new(now, EventKind::OpCoalesce).line(line)
        });
        true
    }

    /// Replaces the payload of a write that has not started service.
    pub fn refresh_payload(&mut self, id: OpId, words: Words) -> bool {
        let op = &mut self.ops[id.0];
        if !op.is_pending() {
            return false;
        }
        op.payload = Payload::Words(words);
        true
    }

    /// Starts service on every idle bank whose queue holds an eligible write.
    pub fn dispatch(&mut self, now: Cycle, log: &mut EventLog) {
        for b in 0..self.banks.len() {
            if self.banks[b].busy.is_some() {
                continue;
            }
            let mut chosen = None;
            for (pos, &id) in self.banks[b].queue.iter().enumerate() {
                if self.unmet(&self.ops[id.0].holds) {
                    continue;
                }
                chosen = Some((pos, id));
                break;
            }
            // refresh Held/Queued flags for reporting
            let queued: Vec<OpId> = self.banks[b].queue.iter().copied().collect();
            for id in queued {
                let held = self.unmet(&self.ops[id.0].holds);
                self.ops[id.0].state = if held { OpState::Held } else { OpState::Queued };
            }
            if let Some((pos, id)) = chosen {
                self.banks[b].queue.remove(pos);
                self.banks[b].busy = Some(id);
                let ev = log.push(Event {
                    bank: Some(b),
                    op: Some(id),
                    persist: Some(self.ops[id.0].kind),
                    thread: Some(self.ops[id.0].thread),
                    region: self.ops[id.0].region,
                    ..Event::new(now, EventKind::OpStart).line(self.ops[id.0].line)
                });
                let op = &mut self.ops[id.0];
                op.state = OpState::InService;
                op.start_time = Some(now);
                op.complete_time = Some(now + self.write_latency);
                op.start_event = Some(ev);
            }
        }
    }

    pub fn next_completion(&self) -> Option<Cycle> {
        self.banks
            .iter()
            .filter_map(|b| {
                b.busy
                    .map(|id| self.ops[id.0].complete_time.expect("in service"))
            })
            .min()
    }

    /// Completes every write finishing at `now`, in bank order, applying
    /// each to the durable image.
    pub fn complete_due(&mut self, now: Cycle, log: &mut EventLog) -> Vec<OpId> {
        let mut done = Vec::new();
        for b in 0..self.banks.len() {
            let Some(id) = self.banks[b].busy else {
                continue;
            };
            if self.ops[id.0].complete_time != Some(now) {
                continue;
            }
            self.banks[b].busy = None;
            let stamp = self.completions.len() as u64;
            let op = &self.ops[id.0];
            let effect = match op.kind {
                PersistKind::Lpo => Effect::Log {
                    thread: op.thread,
                    entry: LogEntry {
                        region: op.region.expect("LPO has a region"),
                        line: op.line,
                        words: op.payload.words(),
                        stamp,
                    },
                },
                PersistKind::Dpo => Effect::Data {
                    line: op.line,
                    words: op.payload.words(),
                    regions: op.obligations.clone(),
                },
                PersistKind::CommitMark => Effect::Mark {
                    thread: op.thread,
                    seq: match op.payload {
                        Payload::Seq(s) => s,
                        Payload::Words(_) => unreachable!("mark payload is a sequence"),
                    },
                },
            };
            let c = Completion {
                time: now,
                stamp,
                op: id,
                effect,
            };
            self.image.apply(&c);
            self.completions.push(c);
            let ev = log.push(Event {
                bank: Some(b),
                op: Some(id),
                persist: Some(op.kind),
                thread: Some(op.thread),
                region: op.region,
                ..Event::new(now, EventKind::OpComplete).line(op.line)
            });
            let line = op.line;
            let kind = op.kind;
            let op = &mut self.ops[id.0];
            op.state = OpState::Complete;
            op.complete_event = Some(ev);
            if kind == PersistKind::Lpo {
                if let Some(v) = self.open_lpos.get_mut(&line) {
                    v.retain(|&o| o != id);
                }
            }
            done.push(id);
        }
        done
    }

    /// Image a crash at `now` would leave. Pure.
    pub fn snapshot(&self, now: Cycle) -> PmImage {
        image_at(self.threads, &self.completions, now)
    }
}
