use std::collections::{BTreeMap, HashMap, VecDeque};

use super::cache::Cache;
use super::config::MachineConfig;
use super::events::{Cycle, Event, EventKind, EventLog};
use super::metrics::Metrics;
use super::pm::{Completion, OpId, OpRequest, PersistOp, PmImage, PmSystem, LOG_BASE};
use super::SimError;
use crate::schemes::{Outcome, Recovery, Scheme};
use crate::trace::{validate, Instr, Line, LockId, RegionId, ThreadId, Trace, Words};

/// Machine state a scheme may act on from its callbacks.
pub struct Core {
    cfg: MachineConfig,
    now: Cycle,
    pm: PmSystem,
    cache: Cache,
    /// Architectural (newest) value of every line ever touched.
    mem: HashMap<Line, Words>,
    events: EventLog,
    metrics: Metrics,
    end_times: HashMap<RegionId, Cycle>,
}

impl Core {
    fn new(cfg: MachineConfig, threads: usize) -> Self {
        Core {
            pm: PmSystem::new(threads, cfg.pm_banks, cfg.pm_write_latency),
            cache: Cache::new(cfg.cache_capacity_lines),
            cfg,
            now: 0,
            mem: HashMap::new(),
            events: EventLog::default(),
            metrics: Metrics::default(),
            end_times: HashMap::new(),
        }
    }

    pub fn now(&self) -> Cycle {
        self.now
    }

    pub fn config(&self) -> &MachineConfig {
        &self.cfg
    }

    pub fn words(&self, line: Line) -> Words {
        self.mem.get(&line).copied().unwrap_or_default()
    }

    pub fn issue(&mut self, req: OpRequest) -> OpId {
        self.pm.issue(req, self.now, &mut self.events)
    }

    pub fn op(&self, id: OpId) -> &PersistOp {
        self.pm.op(id)
    }

    pub fn is_done(&self, id: OpId) -> bool {
        self.pm.op(id).is_done()
    }

    pub fn drop_op(&mut self, id: OpId) -> Option<Vec<RegionId>> {
        self.pm.drop_op(id, self.now, &mut self.events)
    }

    pub fn coalesce(&mut self, id: OpId, words: Words, more: &[RegionId]) -> bool {
        self.pm
            .coalesce(id, words, more, self.now, &mut self.events)
    }

    pub fn refresh_payload(&mut self, id: OpId, words: Words) -> bool {
        self.pm.refresh_payload(id, words)
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn clean(&mut self, line: Line) {
        self.cache.clean(line);
    }

    pub fn pm(&self) -> &PmSystem {
        &self.pm
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }

    /// PM line of log-ring slot `slot` of `thread`.
    pub fn log_addr(&self, thread: ThreadId, slot: usize) -> u64 {
        LOG_BASE + (thread * self.cfg.log_capacity_entries_per_thread + slot) as u64
    }

    pub fn note_commit(&mut self, region: RegionId) {
        self.metrics.regions_committed += 1;
        if let Some(end) = self.end_times.remove(&region) {
            self.metrics.commit_latency.record(self.now - end);
        }
        self.events
            .push(Event::new(self.now, EventKind::Commit).region(region));
    }

    pub fn note_edge(&mut self, from: RegionId, to: RegionId) {
        self.events.push(
            Event::new(self.now, EventKind::DepEdge)
                .region(from)
                .peer(to),
        );
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Block {
    Ops(Vec<OpId>),
    LogSpace,
    Lock,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Status {
    Ready,
    Blocked(Block),
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StallKind {
    Persist,
    Lock,
    LogFull,
}

struct ThreadCtx {
    pc: usize,
    ready_at: Cycle,
    status: Status,
    next_seq: u64,
    region: Option<RegionId>,
    attempt: u32,
    stall: Option<(Cycle, StallKind)>,
    done_at: Cycle,
}

#[derive(Default)]
struct LockState {
    owner: Option<ThreadId>,
    waiters: VecDeque<ThreadId>,
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub scheme: &'static str,
    pub recovery: Recovery,
    pub threads: usize,
    pub metrics: Metrics,
    pub image: PmImage,
    pub events: EventLog,
    pub ops: Vec<PersistOp>,
    pub completions: Vec<Completion>,
    /// Regions in the order their Begin executed.
    pub region_order: Vec<RegionId>,
}

impl RunOutput {
    pub fn crash_snapshot(&self, now: Cycle) -> PmImage {
        super::pm::image_at(self.threads, &self.completions, now)
    }

    /// Last cycle at which anything observable happened.
    pub fn end_cycle(&self) -> Cycle {
        self.metrics.total_cycles.max(self.metrics.drain_cycle)
    }
}

/// Deterministic discrete-event execution of one trace under one scheme.
///
/// Each step either completes the PM writes due at the earliest pending
/// completion time or executes one instruction of the earliest-ready thread
/// (lowest thread id on ties). Completions due at a cycle are processed
/// before instructions ready at that cycle.
pub struct Machine<'a> {
    trace: &'a Trace,
    scheme: Box<dyn Scheme + 'a>,
    core: Core,
    threads: Vec<ThreadCtx>,
    locks: BTreeMap<LockId, LockState>,
    region_order: Vec<RegionId>,
}

impl<'a> Machine<'a> {
    pub fn new(
        trace: &'a Trace,
        scheme: Box<dyn Scheme + 'a>,
        cfg: MachineConfig,
    ) -> Result<Self, SimError> {
        validate(trace).map_err(SimError::InvalidTrace)?;
        Self::new_unchecked(trace, scheme, cfg)
    }

    /// Skips trace validation. Used to feed deliberately racy traces.
    pub fn new_unchecked(
        trace: &'a Trace,
        scheme: Box<dyn Scheme + 'a>,
        cfg: MachineConfig,
    ) -> Result<Self, SimError> {
        cfg.check()?;
        let n = trace.thread_count();
        let threads = (0..n)
            .map(|t| ThreadCtx {
                pc: 0,
                ready_at: 0,
                status: if trace.stream(t).is_empty() {
                    Status::Done
                } else {
                    Status::Ready
                },
                next_seq: 0,
                region: None,
                attempt: 0,
                stall: None,
                done_at: 0,
            })
            .collect();
        Ok(Machine {
            trace,
            scheme,
            core: Core::new(cfg, n),
            threads,
            locks: BTreeMap::new(),
            region_order: Vec::new(),
        })
    }

    pub fn now(&self) -> Cycle {
        self.core.now
    }

    pub fn core(&self) -> &Core {
        &self.core
    }

    /// Durable image a crash at `now` would leave. Does not disturb the run.
    pub fn crash_snapshot(&self, now: Cycle) -> PmImage {
        self.core.pm.snapshot(now)
    }

    fn next_ready(&self) -> Option<(Cycle, ThreadId)> {
        self.threads
            .iter()
            .enumerate()
            .filter(|(_, t)| t.status == Status::Ready)
            .map(|(i, t)| (t.ready_at, i))
            .min()
    }

    /// Advances by one event. Returns false when nothing is left to do.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let pm_next = self.core.pm.next_completion();
        let thread_next = self.next_ready();
        match (pm_next, thread_next) {
            (Some(tp), Some((tt, _))) if tp <= tt => self.complete(tp),
            (Some(tp), None) => self.complete(tp),
            (_, Some((tt, tid))) => self.exec(tid, tt)?,
            (None, None) => return Ok(false),
        }
        Ok(true)
    }

    /// Steps until the next event would happen after `cycle`.
    pub fn run_until(&mut self, cycle: Cycle) -> Result<(), SimError> {
        loop {
            let next = match (self.core.pm.next_completion(), self.next_ready()) {
                (Some(a), Some((b, _))) => a.min(b),
                (Some(a), None) => a,
                (None, Some((b, _))) => b,
                (None, None) => return Ok(()),
            };
            if next > cycle {
                return Ok(());
            }
            self.step()?;
        }
    }

    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        while self.step()? {}
        let stuck: Vec<ThreadId> = (0..self.threads.len())
            .filter(|&t| self.threads[t].status != Status::Done)
            .collect();
        if !stuck.is_empty() {
            if let Some(e) = self.scheme.diagnose_stall(&self.core) {
                return Err(e);
            }
            let all_log = stuck
                .iter()
                .all(|&t| self.threads[t].status == Status::Blocked(Block::LogSpace));
            return Err(if all_log {
                SimError::LogFullDeadlock {
                    cycle: self.core.now,
                    threads: stuck,
                }
            } else {
                SimError::Deadlock {
                    cycle: self.core.now,
                    threads: stuck,
                }
            });
        }
        self.scheme.finish(&mut self.core)?;
        let mut metrics = std::mem::take(&mut self.core.metrics);
        metrics.total_cycles = self.threads.iter().map(|t| t.done_at).max().unwrap_or(0);
        Ok(RunOutput {
            scheme: self.scheme.name(),
            recovery: self.scheme.recovery(),
            threads: self.threads.len(),
            metrics,
            image: self.core.pm.image().clone(),
            ops: self.core.pm.ops().to_vec(),
            completions: self.core.pm.completions().to_vec(),
            events: std::mem::take(&mut self.core.events),
            region_order: self.region_order,
        })
    }

    fn complete(&mut self, now: Cycle) {
        self.core.now = now;
        let done = self.core.pm.complete_due(now, &mut self.core.events);
        for op in done {
            let cat = self.core.pm.op(op).category;
            self.core.metrics.pm_writes.add(cat);
            self.core.metrics.drain_cycle = now;
            self.scheme.on_persist_complete(&mut self.core, op);
        }
        self.core.pm.dispatch(now, &mut self.core.events);
        self.wake(now);
    }

    fn wake(&mut self, now: Cycle) {
        for tid in 0..self.threads.len() {
            let ready = match &self.threads[tid].status {
                Status::Blocked(Block::Ops(ops)) => ops.iter().all(|&o| self.core.is_done(o)),
                Status::Blocked(Block::LogSpace) => self.scheme.log_has_space(tid),
                _ => false,
            };
            if ready {
                let t = &mut self.threads[tid];
                t.status = Status::Ready;
                t.ready_at = now;
            }
        }
    }

    fn stall(&mut self, tid: ThreadId, now: Cycle, kind: StallKind) {
        let t = &mut self.threads[tid];
        match t.stall {
            Some((_, k)) if k == kind => {}
            Some((start, k)) => {
                add_stall(&mut self.core.metrics, k, now - start);
                t.stall = Some((now, kind));
            }
            None => t.stall = Some((now, kind)),
        }
    }

    fn retire(&mut self, tid: ThreadId, now: Cycle, cost: Cycle) {
        let len = self.trace.stream(tid).len();
        let t = &mut self.threads[tid];
        if let Some((start, k)) = t.stall.take() {
            add_stall(&mut self.core.metrics, k, now - start);
        }
        t.pc += 1;
        t.attempt = 0;
        t.ready_at = now + cost;
        if t.pc == len {
            t.status = Status::Done;
            t.done_at = t.ready_at;
        }
    }

    fn evicted(&mut self, victim: Option<(Line, Words)>) {
        if let Some((line, words)) = victim {
            self.core
                .events
                .push(Event::new(self.core.now, EventKind::Evict).line(line));
            self.scheme.on_evict(&mut self.core, line, words);
        }
    }

    fn exec(&mut self, tid: ThreadId, now: Cycle) -> Result<(), SimError> {
        self.core.now = now;
        let instr = self.trace.stream(tid)[self.threads[tid].pc];
        let first = self.threads[tid].attempt == 0;
        self.threads[tid].attempt += 1;
        assert!(
            self.threads[tid].attempt < 1_000_000,
            "scheme keeps re-blocking T{tid} on completed operations"
        );

        let outcome;
        let mut cost = 1;
        match instr {
            Instr::Begin => {
                let r = RegionId::new(tid, self.threads[tid].next_seq);
                if first {
                    self.region_order.push(r);
                    self.core
                        .events
                        .push(Event::new(now, EventKind::RegionBegin).region(r));
                }
                outcome = self.scheme.on_begin(&mut self.core, r);
                if outcome == Outcome::Proceed {
                    let t = &mut self.threads[tid];
                    t.region = Some(r);
                    t.next_seq += 1;
                }
            }
            Instr::End => {
                let r = self.threads[tid]
                    .region
                    .ok_or(SimError::AccessOutsideRegion { thread: tid })?;
                if first {
                    self.core.end_times.insert(r, now);
                    self.core
                        .events
                        .push(Event::new(now, EventKind::RegionEnd).region(r));
                }
                outcome = self.scheme.on_end(&mut self.core, r);
                if outcome == Outcome::Proceed {
                    self.core
                        .events
                        .push(Event::new(now, EventKind::EndRetire).region(r));
                    self.threads[tid].region = None;
                }
            }
            Instr::Store { line, word, value } => {
                let r = self.threads[tid]
                    .region
                    .ok_or(SimError::AccessOutsideRegion { thread: tid })?;
                outcome = self
                    .scheme
                    .on_store(&mut self.core, r, line, word as usize, value);
                cost = self.core.cfg.store_cost;
                if outcome == Outcome::Proceed {
                    let mut words = self.core.words(line);
                    words[word as usize] = value;
                    self.core.mem.insert(line, words);
                    let acc = self.core.cache.access(line, true, Some(words));
                    self.evicted(acc.evicted);
                }
            }
            Instr::Load { line, word } => {
                let r = self.threads[tid].region;
                outcome = self.scheme.on_load(&mut self.core, r, line, word as usize);
                if outcome == Outcome::Proceed {
                    let words = self.core.words(line);
                    let acc = self.core.cache.access(line, false, Some(words));
                    cost = self.core.cfg.load_hit_cost
                        + if acc.hit {
                            0
                        } else {
                            self.core.cfg.pm_read_latency
                        };
                    self.evicted(acc.evicted);
                }
            }
            Instr::Lock(l) => {
                let st = self.locks.entry(l).or_default();
                match st.owner {
                    None => {
                        st.owner = Some(tid);
                        outcome = Outcome::Proceed;
                    }
                    Some(o) if o == tid => outcome = Outcome::Proceed,
                    Some(_) => {
                        if !st.waiters.contains(&tid) {
                            st.waiters.push_back(tid);
                        }
                        self.threads[tid].status = Status::Blocked(Block::Lock);
                        self.stall(tid, now, StallKind::Lock);
                        return Ok(());
                    }
                }
                self.core
                    .events
                    .push(Event::new(now, EventKind::LockAcquire).thread(tid));
            }
            Instr::Unlock(l) => {
                let st = self.locks.entry(l).or_default();
                st.owner = None;
                if let Some(w) = st.waiters.pop_front() {
                    st.owner = Some(w);
                    let waiter = &mut self.threads[w];
                    waiter.status = Status::Ready;
                    waiter.ready_at = now + 1;
                }
                self.core
                    .events
                    .push(Event::new(now, EventKind::LockRelease).thread(tid));
                outcome = Outcome::Proceed;
            }
            Instr::Nop(n) => {
                cost = n as Cycle;
                outcome = Outcome::Proceed;
            }
        }

        match outcome {
            Outcome::Proceed => self.retire(tid, now, cost),
            Outcome::Wait(ops) => {
                if ops.iter().all(|&o| self.core.is_done(o)) {
                    self.threads[tid].ready_at = now;
                } else {
                    self.threads[tid].status = Status::Blocked(Block::Ops(ops));
                    self.stall(tid, now, StallKind::Persist);
                }
            }
            Outcome::LogFull => {
                self.threads[tid].status = Status::Blocked(Block::LogSpace);
                self.stall(tid, now, StallKind::LogFull);
            }
        }
        self.core.pm.dispatch(now, &mut self.core.events);
        self.wake(now);
        Ok(())
    }
}

fn add_stall(m: &mut Metrics, kind: StallKind, cycles: Cycle) {
    match kind {
        StallKind::Persist => m.stalls.persist += cycles,
        StallKind::Lock => m.stalls.lock += cycles,
        StallKind::LogFull => m.stalls.log_full += cycles,
    }
}

/// Validates the trace, then runs it to completion, draining every persist
/// operation.
pub fn run(
    trace: &Trace,
    scheme: Box<dyn Scheme + '_>,
    cfg: &MachineConfig,
) -> Result<RunOutput, SimError> {
    Machine::new(trace, scheme, cfg.clone())?.finish()
}

/// Like [`run`] without validating the trace first.
pub fn run_unchecked(
    trace: &Trace,
    scheme: Box<dyn Scheme + '_>,
    cfg: &MachineConfig,
) -> Result<RunOutput, SimError> {
    Machine::new_unchecked(trace, scheme, cfg.clone())?.finish()
}
