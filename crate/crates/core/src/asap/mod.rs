//! ASAP: asynchronous persistence. Log and data writes are issued in the
//! background and a region's end never stalls its thread. Hardware tracks
//! which uncommitted regions each region read from or overwrote and commits
//! regions in an order consistent with those dependences.

mod tables;

use std::collections::{BTreeSet, HashMap, VecDeque};

pub use tables::{
    ActiveRegionTable, LastWriterTable, RegionEntry, RegionState, RegionWriteSet,
    ThreadLogRegisters,
};

use crate::machine::{Core, OpId, OpRequest, PersistKind, SimError};
use crate::schemes::{Outcome, Recovery, Scheme};
use crate::trace::{Line, RegionId, ThreadId, Words};

/// Traffic optimizations, each independently switchable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AsapOptions {
    /// Log only the first store of a region to a line.
    pub opt_lpo_drop: bool,
    /// Fold a region's data write into a still-queued write of the same line.
    pub opt_dpo_coalesce: bool,
    /// Cancel a queued data write when a newer store dirties the line again.
    pub opt_dpo_drop: bool,
}

impl Default for AsapOptions {
    fn default() -> Self {
        AsapOptions::all()
    }
}

impl AsapOptions {
    pub fn all() -> Self {
        AsapOptions {
            opt_lpo_drop: true,
            opt_dpo_coalesce: true,
            opt_dpo_drop: true,
        }
    }

    pub fn none() -> Self {
        AsapOptions {
            opt_lpo_drop: false,
            opt_dpo_coalesce: false,
            opt_dpo_drop: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Asap {
    opts: AsapOptions,
    threads: Vec<ThreadLogRegisters>,
    lwt: LastWriterTable,
    art: ActiveRegionTable,
    /// Newest data write of each line that has not finished.
    pending_dpo: HashMap<Line, OpId>,
    /// Regions whose data write for the line was dropped; the line's next
    /// data write carries them.
    waiters: HashMap<Line, Vec<RegionId>>,
    /// Regions whose stored value sits dirty in the cache.
    dirty_owners: HashMap<Line, BTreeSet<RegionId>>,
}

impl Asap {
    pub fn new(threads: usize, log_capacity: usize, opts: AsapOptions) -> Self {
        Asap {
            opts,
            threads: vec![ThreadLogRegisters::new(log_capacity); threads],
            lwt: LastWriterTable::default(),
            art: ActiveRegionTable::default(),
            pending_dpo: HashMap::new(),
            waiters: HashMap::new(),
            dirty_owners: HashMap::new(),
        }
    }

    pub fn options(&self) -> AsapOptions {
        self.opts
    }

    pub fn active_regions(&self) -> &ActiveRegionTable {
        &self.art
    }

    pub fn last_writers(&self) -> &LastWriterTable {
        &self.lwt
    }

    pub fn registers(&self, thread: ThreadId) -> &ThreadLogRegisters {
        &self.threads[thread]
    }

    fn depend(&mut self, core: &mut Core, from: RegionId, to: RegionId) {
        if self.art.add_edge(from, to) {
            core.note_edge(from, to);
        }
    }

    fn track_load(&mut self, core: &mut Core, region: RegionId, line: Line) {
        if let Some(w) = self.lwt.get(line) {
            self.depend(core, region, w);
        }
    }

    fn track_store(&mut self, core: &mut Core, region: RegionId, line: Line) -> Outcome {
        let first = !self.art.entry(region).write_set.lines.contains_key(&line);
        let need_lpo = first || !self.opts.opt_lpo_drop;
        if need_lpo && !self.threads[region.thread].ring.has_space() {
            self.flush_waiters(core);
            return Outcome::LogFull;
        }
        if let Some(w) = self.lwt.get(line) {
            self.depend(core, region, w);
        }
        if self.opts.opt_dpo_drop {
            self.supersede_dpo(core, line);
        }
        if need_lpo {
            let slot = self.threads[region.thread]
                .ring
                .alloc(region.seq)
                .expect("ring has space");
            let addr = core.log_addr(region.thread, slot);
            core.issue(OpRequest::lpo(region, line, addr, core.words(line)));
            self.art.entry(region).write_set.outstanding_lpos += 1;
        }
        self.art.entry(region).write_set.lines.insert(line, true);
        self.lwt.set(line, region);
        if self.dirty_owners.entry(line).or_default().insert(region) {
            self.art.entry(region).write_set.add_obligation(line);
        }
        Outcome::Proceed
    }

    /// Drops the line's queued data write; its obligations wait for the
    /// line's next data write.
    fn supersede_dpo(&mut self, core: &mut Core, line: Line) {
        let Some(&d) = self.pending_dpo.get(&line) else {
            return;
        };
        if let Some(obls) = core.drop_op(d) {
            self.pending_dpo.remove(&line);
            self.waiters.entry(line).or_default().extend(obls);
        }
    }

    /// Writes the line's current value for every region still owing it,
    /// coalescing into a queued write when allowed. Returns false when no
    /// region owed the line.
    fn issue_or_coalesce(&mut self, core: &mut Core, line: Line, words: Words) -> bool {
        let mut obls: Vec<RegionId> = self
            .dirty_owners
            .remove(&line)
            .unwrap_or_default()
            .into_iter()
            .collect();
        obls.extend(self.waiters.remove(&line).unwrap_or_default());
        if obls.is_empty() {
            return false;
        }
        let pending = self
            .pending_dpo
            .get(&line)
            .copied()
            .filter(|&d| self.opts.opt_dpo_coalesce && core.op(d).is_pending());
        let mut carried: Vec<RegionId> = pending
            .map(|d| core.op(d).obligations.clone())
            .unwrap_or_default();
        let mut fresh = Vec::new();
        for r in obls {
            if carried.contains(&r) {
                self.art.entry(r).write_set.discharge(line);
            } else {
                carried.push(r);
                fresh.push(r);
            }
        }
        match pending {
            Some(d) => {
                core.coalesce(d, words, &fresh);
            }
            None => {
                let thread = fresh[0].thread;
                let d = core.issue(OpRequest::dpo(thread, line, words, fresh));
                self.pending_dpo.insert(line, d);
            }
        }
        core.clean(line);
        true
    }

    fn flush_waiters(&mut self, core: &mut Core) {
        let mut lines: Vec<Line> = self
            .waiters
            .iter()
            .filter(|(_, w)| !w.is_empty())
            .map(|(l, _)| *l)
            .collect();
        lines.sort();
        for line in lines {
            let words = core.words(line);
            self.issue_or_coalesce(core, line, words);
        }
    }

    fn end_region(&mut self, core: &mut Core, region: RegionId) {
        let prev = region
            .seq
            .checked_sub(1)
            .map(|s| RegionId::new(region.thread, s));
        if let Some(prev) = prev {
            self.depend(core, region, prev);
        }
        let lines: Vec<Line> = self
            .art
            .entry(region)
            .write_set
            .lines
            .keys()
            .copied()
            .collect();
        for line in lines {
            if self
                .dirty_owners
                .get(&line)
                .is_some_and(|o| o.contains(&region))
            {
                let words = core.words(line);
                self.issue_or_coalesce(core, line, words);
            }
        }
        self.art.entry(region).state = RegionState::Pending;
        self.try_commit(core, region);
    }

    fn eligible(&self, region: RegionId) -> bool {
        self.art.get(region).is_some_and(|e| {
            e.state == RegionState::Pending
                && e.mark.is_none()
                && e.write_set.outstanding_lpos == 0
                && e.write_set.obligations_met()
                && e.depends_on.is_empty()
        })
    }

    /// Commits `region` if it is ready, cascading into dependents that
    /// become ready. A region with stores commits once its mark persists.
    fn try_commit(&mut self, core: &mut Core, region: RegionId) {
        let mut work = VecDeque::from([region]);
        while let Some(r) = work.pop_front() {
            if !self.eligible(r) {
                continue;
            }
            if self.art.entry(r).write_set.is_empty() {
                work.extend(self.commit(core, r));
            } else {
                let mark = core.issue(OpRequest::mark(r));
                self.art.entry(r).mark = Some(mark);
            }
        }
    }

    fn commit(&mut self, core: &mut Core, region: RegionId) -> Vec<RegionId> {
        let (entry, dependents) = self.art.remove(region);
        let regs = &mut self.threads[region.thread];
        debug_assert!(regs
            .committed_seq
            .map_or(region.seq == 0, |s| s + 1 == region.seq));
        regs.committed_seq = Some(region.seq);
        regs.ring.free(region.seq);
        self.lwt.purge(region, entry.write_set.lines.keys());
        core.note_commit(region);
        if cfg!(debug_assertions) {
            self.check_tables();
        }
        dependents
    }

    fn check_tables(&self) {
        for r in self.lwt.regions() {
            assert!(
                self.art.contains(r),
                "last-writer table names committed {r}"
            );
        }
        for (r, e) in self.art.iter() {
            for d in &e.depends_on {
                assert!(self.art.contains(*d), "{r} depends on committed {d}");
            }
        }
    }
}

impl Scheme for Asap {
    fn name(&self) -> &'static str {
        "asap"
    }

    fn recovery(&self) -> Recovery {
        Recovery::Undo
    }

    fn on_begin(&mut self, _core: &mut Core, region: RegionId) -> Outcome {
        self.art.insert(region);
        self.threads[region.thread].last_region = Some(region);
        Outcome::Proceed
    }

    fn on_store(
        &mut self,
        core: &mut Core,
        region: RegionId,
        line: Line,
        _word: usize,
        _value: u64,
    ) -> Outcome {
        self.track_store(core, region, line)
    }

    fn on_load(
        &mut self,
        core: &mut Core,
        region: Option<RegionId>,
        line: Line,
        _word: usize,
    ) -> Outcome {
        if let Some(region) = region {
            self.track_load(core, region, line);
        }
        Outcome::Proceed
    }

    fn on_end(&mut self, core: &mut Core, region: RegionId) -> Outcome {
        self.end_region(core, region);
        Outcome::Proceed
    }

    fn on_evict(&mut self, core: &mut Core, line: Line, words: Words) {
        if !self.issue_or_coalesce(core, line, words) {
            core.issue(OpRequest::eviction(0, line, words));
        }
    }

    fn on_persist_complete(&mut self, core: &mut Core, op: OpId) {
        let op = core.op(op).clone();
        match op.kind {
            PersistKind::Lpo => {
                let r = op.region.expect("LPO has a region");
                self.art.entry(r).write_set.outstanding_lpos -= 1;
                self.try_commit(core, r);
            }
            PersistKind::Dpo => {
                if self.pending_dpo.get(&op.line) == Some(&op.id) {
                    self.pending_dpo.remove(&op.line);
                }
                for r in &op.obligations {
                    self.art.entry(*r).write_set.discharge(op.line);
                }
                for r in op.obligations {
                    self.try_commit(core, r);
                }
            }
            PersistKind::CommitMark => {
                let r = op.region.expect("mark has a region");
                let dependents = self.commit(core, r);
                for d in dependents {
                    self.try_commit(core, d);
                }
            }
        }
    }

    fn log_has_space(&self, thread: ThreadId) -> bool {
        self.threads[thread].ring.has_space()
    }

    fn finish(&mut self, core: &mut Core) -> Result<(), SimError> {
        if self.art.is_empty() {
            return Ok(());
        }
        Err(self
            .diagnose_stall(core)
            .unwrap_or_else(|| SimError::Uncommitted {
                regions: self.art.iter().map(|(r, _)| *r).collect(),
            }))
    }

    fn diagnose_stall(&self, core: &Core) -> Option<SimError> {
        self.art
            .find_cycle()
            .map(|regions| SimError::DependenceCycle {
                cycle: core.now(),
                regions,
            })
    }
}
