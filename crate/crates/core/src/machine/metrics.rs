use std::collections::BTreeMap;

use super::pm::WriteCategory;

/// PM writes that reached the device, by category.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct PmWrites {
    pub log: u64,
    pub data: u64,
    pub commit: u64,
    pub eviction: u64,
}

impl PmWrites {
    pub fn add(&mut self, cat: WriteCategory) {
        match cat {
            WriteCategory::Log => self.log += 1,
            WriteCategory::Data => self.data += 1,
            WriteCategory::Commit => self.commit += 1,
            WriteCategory::Eviction => self.eviction += 1,
        }
    }

    /// Writes caused by logging: log, data and commit, eviction excluded.
    pub fn logging(&self) -> u64 {
        self.log + self.data + self.commit
    }

    pub fn total(&self) -> u64 {
        self.logging() + self.eviction
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StallCycles {
    pub persist: u64,
    pub lock: u64,
    pub log_full: u64,
}

/// Power-of-two bucketed histogram; bucket `k` counts values in
/// `[2^(k-1), 2^k)`, bucket 0 counts zeros.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Histogram {
    buckets: BTreeMap<u32, u64>,
    count: u64,
    sum: u64,
    max: u64,
}

impl Histogram {
    pub fn record(&mut self, v: u64) {
        let bucket = 64 - v.leading_zeros();
        *self.buckets.entry(bucket).or_default() += 1;
        self.count += 1;
        self.sum += v;
        self.max = self.max.max(v);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn buckets(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.buckets.iter().map(|(k, v)| (*k, *v))
    }
}

/// Per-run counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Metrics {
    /// Cycle at which the last thread retired its last instruction.
    pub total_cycles: u64,
    /// Cycle at which the last persist operation completed.
    pub drain_cycle: u64,
    pub pm_writes: PmWrites,
    pub stalls: StallCycles,
    pub regions_committed: u64,
    /// End-of-region to commit latency.
    pub commit_latency: Histogram,
}
