use std::collections::{BTreeMap, HashMap};

use super::{LogRing, Outcome, Recovery, Scheme};
use crate::machine::{Core, OpId, OpRequest, PersistKind};
use crate::trace::{Line, RegionId, ThreadId, Words};

#[derive(Debug, Default)]
struct UndoRegion {
    lpos: BTreeMap<Line, OpId>,
    dpos: Vec<OpId>,
    ended: bool,
    mark: Option<OpId>,
}

/// Undo logging with a synchronous commit: the region end flushes the write
/// set, waits for every log and data write, then persists the commit mark.
/// With `sync_log` each first store to a line also waits for its log write.
#[derive(Debug)]
pub struct SyncUndo {
    sync_log: bool,
    rings: Vec<LogRing>,
    regions: HashMap<RegionId, UndoRegion>,
    dirty_owner: HashMap<Line, RegionId>,
    /// Highest committed sequence number per thread.
    committed: Vec<Option<u64>>,
}

impl SyncUndo {
    pub fn new(sync_log: bool, threads: usize, log_capacity: usize) -> Self {
        SyncUndo {
            sync_log,
            rings: vec![LogRing::new(log_capacity); threads],
            regions: HashMap::new(),
            committed: vec![None; threads],
            dirty_owner: HashMap::new(),
        }
    }
}

fn pending(core: &Core, ops: impl IntoIterator<Item = OpId>) -> Vec<OpId> {
    ops.into_iter().filter(|&o| !core.is_done(o)).collect()
}

impl Scheme for SyncUndo {
    fn name(&self) -> &'static str {
        if self.sync_log {
            "sw"
        } else {
            "hwundo"
        }
    }

    fn recovery(&self) -> Recovery {
        Recovery::Undo
    }

    fn on_store(
        &mut self,
        core: &mut Core,
        region: RegionId,
        line: Line,
        _word: usize,
        _value: u64,
    ) -> Outcome {
        let st = self.regions.entry(region).or_default();
        let lpo = match st.lpos.get(&line) {
            Some(&lpo) => lpo,
            None => {
                let Some(slot) = self.rings[region.thread].alloc(region.seq) else {
                    return Outcome::LogFull;
                };
                let addr = core.log_addr(region.thread, slot);
                let lpo = core.issue(OpRequest::lpo(region, line, addr, core.words(line)));
                st.lpos.insert(line, lpo);
                self.dirty_owner.insert(line, region);
                lpo
            }
        };
        if self.sync_log && !core.is_done(lpo) {
            Outcome::Wait(vec![lpo])
        } else {
            Outcome::Proceed
        }
    }

    fn on_end(&mut self, core: &mut Core, region: RegionId) -> Outcome {
        let Some(st) = self.regions.get_mut(&region) else {
            if self.committed[region.thread].is_none_or(|c| c < region.seq) {
                self.committed[region.thread] = Some(region.seq);
                core.note_commit(region);
            }
            return Outcome::Proceed;
        };
        if !st.ended {
            st.ended = true;
            let lines: Vec<Line> = st.lpos.keys().copied().collect();
            for line in lines {
                if core.cache().is_dirty(line) {
                    let dpo = core.issue(OpRequest::dpo(
                        region.thread,
                        line,
                        core.words(line),
                        vec![region],
                    ));
                    st.dpos.push(dpo);
                    core.clean(line);
                }
            }
        }
        let waiting = pending(core, st.lpos.values().chain(&st.dpos).copied());
        if !waiting.is_empty() {
            return Outcome::Wait(waiting);
        }
        let mark = *st
            .mark
            .get_or_insert_with(|| core.issue(OpRequest::mark(region)));
        if core.is_done(mark) {
            Outcome::Proceed
        } else {
            Outcome::Wait(vec![mark])
        }
    }

    fn on_evict(&mut self, core: &mut Core, line: Line, words: Words) {
        match self.dirty_owner.get(&line) {
            Some(&owner) if self.regions.contains_key(&owner) => {
                let dpo = core.issue(OpRequest::dpo(owner.thread, line, words, vec![owner]));
                self.regions.get_mut(&owner).unwrap().dpos.push(dpo);
            }
            _ => {
                core.issue(OpRequest::eviction(0, line, words));
            }
        }
    }

    fn on_persist_complete(&mut self, core: &mut Core, op: OpId) {
        let op = core.op(op);
        if op.kind != PersistKind::CommitMark {
            return;
        }
        let region = op.region.expect("mark has a region");
        if let Some(st) = self.regions.remove(&region) {
            for line in st.lpos.keys() {
                if self.dirty_owner.get(line) == Some(&region) {
                    self.dirty_owner.remove(line);
                }
            }
        }
        self.rings[region.thread].free(region.seq);
        self.committed[region.thread] = Some(region.seq);
        core.note_commit(region);
    }

    fn log_has_space(&self, thread: ThreadId) -> bool {
        self.rings[thread].has_space()
    }
}
