use thiserror::Error;

/// Timing and capacity parameters of the simulated machine. All values are
/// in cycles or counts and must be at least 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MachineConfig {
    pub pm_write_latency: u64,
    pub pm_read_latency: u64,
    pub pm_banks: usize,
    pub cache_capacity_lines: usize,
    pub store_cost: u64,
    pub load_hit_cost: u64,
    pub log_capacity_entries_per_thread: usize,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            pm_write_latency: 150,
            pm_read_latency: 150,
            pm_banks: 4,
            cache_capacity_lines: 1024,
            store_cost: 1,
            load_hit_cost: 1,
            log_capacity_entries_per_thread: 4096,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("machine parameter `{0}` must be at least 1")]
pub struct ConfigError(pub &'static str);

impl MachineConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        let fields: [(&'static str, u64); 7] = [
            ("pm_write_latency", self.pm_write_latency),
            ("pm_read_latency", self.pm_read_latency),
            ("pm_banks", self.pm_banks as u64),
            ("cache_capacity_lines", self.cache_capacity_lines as u64),
            ("store_cost", self.store_cost),
            ("load_hit_cost", self.load_hit_cost),
            (
                "log_capacity_entries_per_thread",
                self.log_capacity_entries_per_thread as u64,
            ),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(ConfigError(name)),
            None => Ok(()),
        }
    }

    pub fn with_write_latency(mut self, latency: u64) -> Self {
        self.pm_write_latency = latency;
        self
    }
}
