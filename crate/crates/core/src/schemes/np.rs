use super::{Outcome, Recovery, Scheme};
use crate::machine::{Core, OpId, OpRequest};
use crate::trace::{Line, RegionId, Words};

/// Baseline without crash consistency. Regions count as committed when they
/// end; PM only sees dirty lines the cache evicts.
#[derive(Clone, Debug, Default)]
pub struct NoPersist;

impl Scheme for NoPersist {
    fn name(&self) -> &'static str {
        "np"
    }

    fn recovery(&self) -> Recovery {
        Recovery::None
    }

    fn on_store(&mut self, _: &mut Core, _: RegionId, _: Line, _: usize, _: u64) -> Outcome {
        Outcome::Proceed
    }

    fn on_end(&mut self, core: &mut Core, region: RegionId) -> Outcome {
        core.note_commit(region);
        Outcome::Proceed
    }

    fn on_evict(&mut self, core: &mut Core, line: Line, words: Words) {
        core.issue(OpRequest::eviction(0, line, words));
    }

    fn on_persist_complete(&mut self, _: &mut Core, _: OpId) {}
}
