use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::machine::Metrics;
use crate::schemes::SchemeKind;

pub const METRICS_CSV_HEADER: &str = "scheme,benchmark,cycles,stall_persist,stall_lock,\
stall_logfull,pm_log,pm_data,pm_commit,pm_evict,regions,speedup_vs_sw,traffic_vs_hwundo";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunRecord {
    pub benchmark: String,
    pub scheme: SchemeKind,
    pub latency: u64,
    pub metrics: Metrics,
}

/// Geometric mean; `None` for an empty input or any non-positive value.
pub fn geomean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

/// Results of running a set of schemes over a set of benchmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub benchmarks: Vec<String>,
    pub schemes: Vec<SchemeKind>,
    pub records: Vec<RunRecord>,
}

impl Comparison {
    pub fn new(benchmarks: Vec<String>, schemes: Vec<SchemeKind>, records: Vec<RunRecord>) -> Self {
        Comparison {
            benchmarks,
            schemes,
            records,
        }
    }

    pub fn get(&self, benchmark: &str, scheme: SchemeKind) -> Option<&Metrics> {
        self.records
            .iter()
            .find(|r| r.benchmark == benchmark && r.scheme == scheme)
            .map(|r| &r.metrics)
    }

    pub fn cycles(&self, benchmark: &str, scheme: SchemeKind) -> Option<u64> {
        self.get(benchmark, scheme).map(|m| m.total_cycles)
    }

    /// cycles(SW) / cycles(scheme).
    pub fn speedup_vs_sw(&self, benchmark: &str, scheme: SchemeKind) -> Option<f64> {
        ratio(
            self.cycles(benchmark, SchemeKind::Sw)?,
            self.cycles(benchmark, scheme)?,
        )
    }

    /// Logging writes (log, data, commit) of `scheme` over those of HWUndo.
    pub fn traffic_vs_hwundo(&self, benchmark: &str, scheme: SchemeKind) -> Option<f64> {
        ratio(
            self.get(benchmark, scheme)?.pm_writes.logging(),
            self.get(benchmark, SchemeKind::HwUndo)?.pm_writes.logging(),
        )
    }

    /// Like [`Comparison::traffic_vs_hwundo`] with eviction writes included.
    pub fn traffic_vs_hwundo_inclusive(&self, benchmark: &str, scheme: SchemeKind) -> Option<f64> {
        ratio(
            self.get(benchmark, scheme)?.pm_writes.total(),
            self.get(benchmark, SchemeKind::HwUndo)?.pm_writes.total(),
        )
    }

    /// Geomean over benchmarks of `f(benchmark)`; `None` if any is undefined.
    pub fn geomean_of(&self, f: impl Fn(&str) -> Option<f64>) -> Option<f64> {
        let v: Option<Vec<f64>> = self.benchmarks.iter().map(|b| f(b)).collect();
        geomean(&v?)
    }

    /// Geomean of cycles(a) / cycles(b).
    pub fn geomean_cycle_ratio(&self, a: SchemeKind, b: SchemeKind) -> Option<f64> {
        self.geomean_of(|bench| ratio(self.cycles(bench, a)?, self.cycles(bench, b)?))
    }

    pub fn to_csv(&self) -> String {
        self.csv(true)
    }

    /// CSV with or without the trailing per-scheme geomean rows.
    pub fn csv(&self, geomean_rows: bool) -> String {
        let mut out = format!("{METRICS_CSV_HEADER}\n");
        for b in &self.benchmarks {
            for &s in &self.schemes {
                let Some(m) = self.get(b, s) else { continue };
                let _ = writeln!(
                    out,
                    "{s},{b},{},{},{},{},{},{},{},{},{},{},{}",
                    m.total_cycles,
                    m.stalls.persist,
                    m.stalls.lock,
                    m.stalls.log_full,
                    m.pm_writes.log,
                    m.pm_writes.data,
                    m.pm_writes.commit,
                    m.pm_writes.eviction,
                    m.regions_committed,
                    cell(self.speedup_vs_sw(b, s)),
                    cell(self.traffic_vs_hwundo(b, s)),
                );
            }
        }
        for &s in self.schemes.iter().filter(|_| geomean_rows) {
            let _ = writeln!(
                out,
                "{s},geomean,,,,,,,,,,{},{}",
                cell(self.geomean_of(|b| self.speedup_vs_sw(b, s))),
                cell(self.geomean_of(|b| self.traffic_vs_hwundo(b, s))),
            );
        }
        out
    }

    /// Human-readable table, with the eviction-inclusive traffic ratio as
    /// an extra column.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<28} {:<7} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}\n",
            "benchmark",
            "scheme",
            "cycles",
            "stall_p",
            "log",
            "data",
            "commit",
            "evict",
            "speedup",
            "traffic",
            "traf+ev"
        );
        let f = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        for b in &self.benchmarks {
            for &s in &self.schemes {
                let Some(m) = self.get(b, s) else { continue };
                let _ = writeln!(
                    out,
                    "{b:<28} {:<7} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}",
                    s.name(),
                    m.total_cycles,
                    m.stalls.persist,
                    m.pm_writes.log,
                    m.pm_writes.data,
                    m.pm_writes.commit,
                    m.pm_writes.eviction,
                    f(self.speedup_vs_sw(b, s)),
                    f(self.traffic_vs_hwundo(b, s)),
                    f(self.traffic_vs_hwundo_inclusive(b, s)),
                );
            }
        }
        for &s in &self.schemes {
            let _ = writeln!(
                out,
                "{:<28} {:<7} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}",
                "geomean",
                s.name(),
                "",
                "",
                "",
                "",
                "",
                "",
                f(self.geomean_of(|b| self.speedup_vs_sw(b, s))),
                f(self.geomean_of(|b| self.traffic_vs_hwundo(b, s))),
                f(self.geomean_of(|b| self.traffic_vs_hwundo_inclusive(b, s))),
            );
        }
        out
    }
}

/// A comparison repeated at several PM write latencies.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencySweep {
    pub points: Vec<(u64, Comparison)>,
}

impl LatencySweep {
    pub fn cycles(&self, latency: u64, benchmark: &str, scheme: SchemeKind) -> Option<u64> {
        self.points
            .iter()
            .find(|(l, _)| *l == latency)?
            .1
            .cycles(benchmark, scheme)
    }

    /// cycles at latency `to` over cycles at latency `from`.
    pub fn slowdown(&self, benchmark: &str, scheme: SchemeKind, from: u64, to: u64) -> Option<f64> {
        ratio(
            self.cycles(to, benchmark, scheme)?,
            self.cycles(from, benchmark, scheme)?,
        )
    }

    /// Comparison CSV rows with a leading `latency` column.
    pub fn to_csv(&self) -> String {
        let mut out = format!("latency,{METRICS_CSV_HEADER}\n");
        for (l, c) in &self.points {
            for row in c.to_csv().lines().skip(1) {
                let _ = writeln!(out, "{l},{row}");
            }
        }
        out
    }

    /// Writes one two-column `latency cycles` file per (benchmark, scheme)
    /// into `dir`, plus `manifest.txt` listing them. Returns the paths
    /// written.
    pub fn write_plot_data(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let Some((_, first)) = self.points.first() else {
            return Ok(Vec::new());
        };
        let mut written = Vec::new();
        let mut manifest =
            String::from("# file benchmark scheme (columns: pm_write_latency cycles)\n");
        for b in &first.benchmarks {
            for &s in &first.schemes {
                let name = format!("{b}.{s}.dat");
                let path = dir.join(&name);
                let mut body = format!("# {b} {s}\n");
                for (l, c) in &self.points {
                    if let Some(cy) = c.cycles(b, s) {
                        let _ = writeln!(body, "{l} {cy}");
                    }
                }
                std::fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
                let _ = writeln!(manifest, "{name} {b} {s}");
                written.push(path);
            }
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, manifest).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(b: &str, s: SchemeKind, cycles: u64, log: u64) -> RunRecord {
        let mut metrics = Metrics {
            total_cycles: cycles,
            ..Metrics::default()
        };
        metrics.pm_writes.log = log;
        RunRecord {
            benchmark: b.into(),
            scheme: s,
            latency: 150,
            metrics,
        }
    }

    #[test]
    fn geomean_basics() {
        assert_eq!(geomean(&[]), None);
        assert!((geomean(&[2.0, 8.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geomean(&[1.0, 0.0]), None);
    }

    #[test]
    fn sw_speedup_is_one_and_missing_ratios_are_blank() {
        let c = Comparison::new(
            vec!["a".into()],
            vec![SchemeKind::Sw, SchemeKind::Asap],
            vec![
                rec("a", SchemeKind::Sw, 400, 4),
                rec("a", SchemeKind::Asap, 100, 4),
            ],
        );
        assert_eq!(c.speedup_vs_sw("a", SchemeKind::Sw), Some(1.0));
        assert_eq!(c.speedup_vs_sw("a", SchemeKind::Asap), Some(4.0));
        assert_eq!(c.traffic_vs_hwundo("a", SchemeKind::Asap), None);
        let csv = c.to_csv();
        assert!(csv.starts_with(METRICS_CSV_HEADER));
        assert!(csv.contains("\nsw,a,400,0,0,0,4,0,0,0,0,1.0000,\n"));
        assert!(csv.contains("\nasap,geomean,,,,,,,,,,4.0000,\n"));
    }
}
