use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::asap::AsapOptions;
use crate::machine::MachineConfig;
use crate::schemes::SchemeKind;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "ASAPSIM_CONFIG";

/// Everything a command can be configured with. Built from defaults, then a
/// `key = value` config file, then command-line overrides, each layer
/// replacing the previous one key by key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settings {
    pub machine: MachineConfig,
    pub opts: AsapOptions,
    pub schemes: Vec<SchemeKind>,
    pub latencies: Vec<u64>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            machine: MachineConfig::default(),
            opts: AsapOptions::all(),
            schemes: SchemeKind::ALL.to_vec(),
            latencies: vec![150, 300, 600, 1200],
        }
    }
}

/// Every key accepted in config files.
pub const KEYS: [&str; 12] = [
    "pm_write_latency",
    "pm_read_latency",
    "pm_banks",
    "cache_capacity_lines",
    "store_cost",
    "load_hit_cost",
    "log_capacity_entries_per_thread",
    "opt_lpo_drop",
    "opt_dpo_coalesce",
    "opt_dpo_drop",
    "schemes",
    "latencies",
];

fn bad(key: &str, value: &str) -> HarnessError {
    HarnessError::Setting {
        key: key.to_string(),
        msg: format!("bad value `{value}`"),
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

pub fn parse_schemes(value: &str) -> Result<Vec<SchemeKind>, HarnessError> {
    let schemes = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<SchemeKind>())
        .collect::<Result<Vec<_>, _>>()?;
    if schemes.is_empty() {
        return Err(bad("schemes", value));
    }
    Ok(schemes)
}

pub fn parse_latencies(value: &str) -> Result<Vec<u64>, HarnessError> {
    let lat = value
        .split(',')
        .map(|s| num::<u64>("latencies", s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if lat.is_empty() || lat.contains(&0) {
        return Err(bad("latencies", value));
    }
    Ok(lat)
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let value = value.trim();
        let m = &mut self.machine;
        match key {
            "pm_write_latency" => m.pm_write_latency = num(key, value)?,
            "pm_read_latency" => m.pm_read_latency = num(key, value)?,
            "pm_banks" => m.pm_banks = num(key, value)?,
            "cache_capacity_lines" => m.cache_capacity_lines = num(key, value)?,
            "store_cost" => m.store_cost = num(key, value)?,
            "load_hit_cost" => m.load_hit_cost = num(key, value)?,
            "log_capacity_entries_per_thread" => {
                m.log_capacity_entries_per_thread = num(key, value)?
            }
            "opt_lpo_drop" => self.opts.opt_lpo_drop = flag(key, value)?,
            "opt_dpo_coalesce" => self.opts.opt_dpo_coalesce = flag(key, value)?,
            "opt_dpo_drop" => self.opts.opt_dpo_drop = flag(key, value)?,
            "schemes" | "scheme" => self.schemes = parse_schemes(value)?,
            "latencies" => self.latencies = parse_latencies(value)?,
            _ => {
                return Err(HarnessError::Setting {
                    key: key.to_string(),
                    msg: "unknown key".into(),
                })
            }
        }
        Ok(())
    }

    /// Applies a config file body: one `key = value` per line, `#` starts a
    /// comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), HarnessError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Setting {
                key: format!("line {}", i + 1),
                msg: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value)?;
        }
        self.machine
            .check()
            .map_err(crate::machine::SimError::from)?;
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Defaults, then `file` (or the file named by the environment
    /// variable), then `overrides` in order.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Settings, HarnessError> {
        let mut s = Settings::default();
        let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        if let Some(path) = file.map(Path::to_path_buf).or(env) {
            s.apply_file(&path)?;
        }
        for (k, v) in overrides {
            s.set(k, v)?;
        }
        s.machine.check().map_err(crate::machine::SimError::from)?;
        Ok(s)
    }

    /// Canonical `key = value` rendering, readable by [`Settings::apply_text`].
    pub fn render(&self) -> String {
        let m = &self.machine;
        let onoff = |b: bool| if b { "on" } else { "off" };
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.name()).collect();
        let lat: Vec<String> = self.latencies.iter().map(|l| l.to_string()).collect();
        format!(
            "pm_write_latency = {}\npm_read_latency = {}\npm_banks = {}\n\
             cache_capacity_lines = {}\nstore_cost = {}\nload_hit_cost = {}\n\
             log_capacity_entries_per_thread = {}\nopt_lpo_drop = {}\n\
             opt_dpo_coalesce = {}\nopt_dpo_drop = {}\nschemes = {}\nlatencies = {}\n",
            m.pm_write_latency,
            m.pm_read_latency,
            m.pm_banks,
            m.cache_capacity_lines,
            m.store_cost,
            m.load_hit_cost,
            m.log_capacity_entries_per_thread,
            onoff(self.opts.opt_lpo_drop),
            onoff(self.opts.opt_dpo_coalesce),
            onoff(self.opts.opt_dpo_drop),
            schemes.join(","),
            lat.join(",")
        )
    }
}
