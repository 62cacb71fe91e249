//! Timing and state substrate: global clock, per-thread execution, the
//! write-back cache, banked PM and the durable image.

pub mod audit;
mod cache;
mod config;
mod engine;
mod events;
mod metrics;
mod pm;

use thiserror::Error;

pub use cache::{Cache, CacheAccess};
pub use config::{ConfigError, MachineConfig};
pub use engine::{run, run_unchecked, Core, Machine, RunOutput};
pub use events::{Cycle, Event, EventKind, EventLog};
pub use metrics::{Histogram, Metrics, PmWrites, StallCycles};
pub use pm::{
    image_at, normalize, Completion, DataOrigin, DataState, Effect, LogEntry, OpId, OpRequest,
    OpState, Payload, PersistKind, PersistOp, PmImage, PmSystem, WriteCategory, LOG_BASE,
    MARK_BASE,
};

use crate::trace::{RegionId, ThreadId, Violation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("trace failed validation: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidTrace(Vec<Violation>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("thread T{thread} executes a load/store outside any region")]
    AccessOutsideRegion { thread: ThreadId },
    #[error("deadlock at cycle {cycle}: threads {threads:?} blocked forever")]
    Deadlock {
        cycle: Cycle,
        threads: Vec<ThreadId>,
    },
    #[error("log-full deadlock at cycle {cycle}: threads {threads:?} wait for log space that no commit can free")]
    LogFullDeadlock {
        cycle: Cycle,
        threads: Vec<ThreadId>,
    },
    #[error("dependence cycle among uncommitted regions at cycle {cycle}: {}", fmt_regions(.regions))]
    DependenceCycle {
        cycle: Cycle,
        regions: Vec<RegionId>,
    },
    #[error("regions never committed: {}", fmt_regions(.regions))]
    Uncommitted { regions: Vec<RegionId> },
}

fn fmt_regions(regions: &[RegionId]) -> String {
    regions
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}
