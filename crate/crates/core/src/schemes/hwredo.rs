use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{LogRing, Outcome, Recovery, Scheme};
use crate::machine::{Core, OpId, OpRequest, PersistKind};
use crate::trace::{Line, RegionId, ThreadId, Words};

#[derive(Debug, Default)]
struct RedoRegion {
    /// Lines whose log entry still sits in the log buffer.
    buffered: BTreeSet<Line>,
    lpos: BTreeMap<Line, OpId>,
    final_words: Option<BTreeMap<Line, Words>>,
    mark: Option<OpId>,
    open_dpos: usize,
}

/// Redo logging: stores collect post-images in a per-thread log buffer that
/// combines entries by line. The region end writes the buffer out and waits
/// for it and for the commit mark; data writes drain after commit.
#[derive(Debug)]
pub struct HwRedo {
    rings: Vec<LogRing>,
    regions: HashMap<RegionId, RedoRegion>,
    /// Highest committed sequence number per thread.
    committed: Vec<Option<u64>>,
}

impl HwRedo {
    pub fn new(threads: usize, log_capacity: usize) -> Self {
        HwRedo {
            rings: vec![LogRing::new(log_capacity); threads],
            regions: HashMap::new(),
            committed: vec![None; threads],
        }
    }
}

impl Scheme for HwRedo {
    fn name(&self) -> &'static str {
        "hwredo"
    }

    fn recovery(&self) -> Recovery {
        Recovery::Redo
    }

    fn on_store(
        &mut self,
        _core: &mut Core,
        region: RegionId,
        line: Line,
        _word: usize,
        _value: u64,
    ) -> Outcome {
        self.regions
            .entry(region)
            .or_default()
            .buffered
            .insert(line);
        Outcome::Proceed
    }

    fn on_end(&mut self, core: &mut Core, region: RegionId) -> Outcome {
        let Some(st) = self.regions.get_mut(&region) else {
            if self.committed[region.thread].is_none_or(|c| c < region.seq) {
                self.committed[region.thread] = Some(region.seq);
                core.note_commit(region);
            }
            return Outcome::Proceed;
        };
        while let Some(&line) = st.buffered.first() {
            let Some(slot) = self.rings[region.thread].alloc(region.seq) else {
                return Outcome::LogFull;
            };
            let addr = core.log_addr(region.thread, slot);
            let lpo = core.issue(OpRequest::lpo(region, line, addr, core.words(line)));
            st.lpos.insert(line, lpo);
            st.buffered.remove(&line);
        }
        if st.final_words.is_none() {
            st.final_words = Some(st.lpos.keys().map(|&l| (l, core.words(l))).collect());
        }
        let waiting: Vec<OpId> = st
            .lpos
            .values()
            .copied()
            .filter(|&o| !core.is_done(o))
            .collect();
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
        let owned = self.regions.values().any(|st| {
            st.mark.is_none_or(|m| !core.is_done(m))
                && (st.lpos.contains_key(&line) || st.buffered.contains(&line))
        });
        if !owned {
            core.issue(OpRequest::eviction(0, line, words));
        }
    }

    fn on_persist_complete(&mut self, core: &mut Core, op: OpId) {
        let (kind, mark_id) = (core.op(op).kind, op);
        let region = core.op(op).region;
        match kind {
            PersistKind::CommitMark => {
                let region = region.expect("mark has a region");
                let st = self
                    .regions
                    .get_mut(&region)
                    .expect("marked region is tracked");
                let words = st.final_words.take().unwrap_or_default();
                for (line, w) in words {
                    let mut req = OpRequest::dpo(region.thread, line, w, vec![region]);
                    req.wal = false;
                    req.extra_holds = vec![mark_id];
                    core.issue(req);
                    core.clean(line);
                    st.open_dpos += 1;
                }
                self.committed[region.thread] = Some(region.seq);
                core.note_commit(region);
                if st.open_dpos == 0 {
                    self.regions.remove(&region);
                    self.rings[region.thread].free(region.seq);
                }
            }
            PersistKind::Dpo => {
                let Some(region) = region else { return };
                let Some(st) = self.regions.get_mut(&region) else {
                    return;
                };
                if st.mark.is_some_and(|m| core.is_done(m)) {
                    st.open_dpos -= 1;
                    if st.open_dpos == 0 {
                        self.regions.remove(&region);
                        self.rings[region.thread].free(region.seq);
                    }
                }
            }
            PersistKind::Lpo => {}
        }
    }

    fn log_has_space(&self, thread: ThreadId) -> bool {
        self.rings[thread].has_space()
    }
}
