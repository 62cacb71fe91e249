//! Experiment driver: configuration, benchmark suites, scheme comparison,
//! latency sweeps, crash campaigns and their CSV output.

mod report;
mod settings;

use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use report::{geomean, Comparison, LatencySweep, RunRecord, METRICS_CSV_HEADER};
pub use settings::{parse_latencies, parse_schemes, Settings, CONFIG_ENV, KEYS};

use crate::crashcheck::{CrashMode, CrashTest, OracleError, SweepReport, VERDICT_CSV_HEADER};
use crate::machine::{run, SimError};
use crate::schemes::{SchemeKind, UnknownScheme};
use crate::trace::{
    generate, parse_trace, validate, Trace, TraceError, Violation, WorkloadKind, WorkloadSpec,
    WorkloadSpecError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceError },
    #[error("{name}: trace is not well formed:\n  {}", fmt_violations(.violations))]
    InvalidTrace {
        name: String,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Workload(#[from] WorkloadSpecError),
    #[error(transparent)]
    Scheme(#[from] UnknownScheme),
    #[error("setting `{key}`: {msg}")]
    Setting { key: String, msg: String },
    #[error("{benchmark} under {scheme}: {source}")]
    Run {
        benchmark: String,
        scheme: SchemeKind,
        source: SimError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{benchmark}: {source}")]
    Oracle {
        benchmark: String,
        source: OracleError,
    },
    #[error("unknown suite `{0}` (expected default or small)")]
    UnknownSuite(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("\n  ")
}

/// A named trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Benchmark {
    pub name: String,
    pub trace: Trace,
}

impl Benchmark {
    pub fn from_spec(spec: &WorkloadSpec) -> Result<Self, HarnessError> {
        spec.check()?;
        Ok(Benchmark {
            name: spec.label(),
            trace: generate(spec),
        })
    }

    /// Parses and validates trace text.
    pub fn from_text(name: &str, text: &str) -> Result<Self, HarnessError> {
        let trace = parse_trace(text).map_err(|source| HarnessError::Trace {
            path: PathBuf::from(name),
            source,
        })?;
        validate(&trace).map_err(|violations| HarnessError::InvalidTrace {
            name: name.to_string(),
            violations,
        })?;
        Ok(Benchmark {
            name: name.to_string(),
            trace,
        })
    }

    /// Reads and validates a trace file; the benchmark is named after the
    /// file stem.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::from_text(&name, &text).map_err(|e| match e {
            HarnessError::Trace { source, .. } => HarnessError::Trace {
                path: path.to_path_buf(),
                source,
            },
            e => e,
        })
    }
}

/// Small traces (at most 3 threads, 8 regions and 8 lines) shipped with the
/// crate, small enough for exhaustive crash testing.
pub const SMALL_TRACES: [(&str, &str); 6] = [
    ("swap", include_str!("../../traces/swap.trace")),
    ("counter", include_str!("../../traces/counter.trace")),
    ("hashmap", include_str!("../../traces/hashmap.trace")),
    ("queue", include_str!("../../traces/queue.trace")),
    (
        "producer_consumer",
        include_str!("../../traces/producer_consumer.trace"),
    ),
    ("handoff", include_str!("../../traces/handoff.trace")),
];

/// The write-heavy benchmark suite used for scheme comparisons: every
/// generator, four threads contending on one lock, small hot line pools.
pub fn default_suite() -> Vec<WorkloadSpec> {
    WorkloadKind::ALL
        .into_iter()
        .map(|kind| WorkloadSpec {
            threads: 4,
            regions: 32,
            stores_per_region: 8,
            line_pool: 16,
            ..WorkloadSpec::new(kind)
        })
        .collect()
}

pub fn suite(name: &str) -> Result<Vec<Benchmark>, HarnessError> {
    match name {
        "default" => default_suite().iter().map(Benchmark::from_spec).collect(),
        "small" => SMALL_TRACES
            .iter()
            .map(|(name, text)| Benchmark::from_text(name, text))
            .collect(),
        other => Err(HarnessError::UnknownSuite(other.to_string())),
    }
}

/// Runs one benchmark under one scheme.
pub fn run_one(
    bench: &Benchmark,
    scheme: SchemeKind,
    settings: &Settings,
) -> Result<RunRecord, HarnessError> {
    let cfg = &settings.machine;
    let s = scheme.build(
        bench.trace.thread_count(),
        cfg.log_capacity_entries_per_thread,
        settings.opts,
    );
    let out = run(&bench.trace, s, cfg).map_err(|source| HarnessError::Run {
        benchmark: bench.name.clone(),
        scheme,
        source,
    })?;
    Ok(RunRecord {
        benchmark: bench.name.clone(),
        scheme,
        latency: cfg.pm_write_latency,
        metrics: out.metrics,
    })
}

/// Every benchmark under every scheme, in parallel; results come back in
/// (benchmark, scheme) order.
pub fn compare(
    benches: &[Benchmark],
    schemes: &[SchemeKind],
    settings: &Settings,
) -> Result<Comparison, HarnessError> {
    let jobs: Vec<(&Benchmark, SchemeKind)> = benches
        .iter()
        .flat_map(|b| schemes.iter().map(move |&s| (b, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(b, s)| run_one(b, s, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison::new(
        benches.iter().map(|b| b.name.clone()).collect(),
        schemes.to_vec(),
        records,
    ))
}

/// [`compare`] at each write latency.
pub fn latency_sweep(
    benches: &[Benchmark],
    schemes: &[SchemeKind],
    latencies: &[u64],
    settings: &Settings,
) -> Result<LatencySweep, HarnessError> {
    let points = latencies
        .iter()
        .map(|&l| {
            let mut s = settings.clone();
            s.machine.pm_write_latency = l;
            compare(benches, schemes, &s).map(|c| (l, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LatencySweep { points })
}

/// Crash campaign over every benchmark and scheme.
pub fn crashtest(
    benches: &[Benchmark],
    schemes: &[SchemeKind],
    mode: CrashMode,
    settings: &Settings,
) -> Result<Vec<(String, SweepReport)>, HarnessError> {
    let mut out = Vec::new();
    for b in benches {
        for &s in schemes {
            let report = CrashTest::new(&b.trace, s)
                .config(settings.machine.clone())
                .options(settings.opts)
                .mode(mode)
                .run()
                .map_err(|source| HarnessError::Oracle {
                    benchmark: b.name.clone(),
                    source,
                })?;
            out.push((b.name.clone(), report));
        }
    }
    Ok(out)
}

/// Verdict CSV for a crash campaign.
pub fn crash_csv(reports: &[(String, SweepReport)]) -> String {
    let mut out = format!("{VERDICT_CSV_HEADER}\n");
    for (_, r) in reports {
        r.write_csv_rows(&mut out);
    }
    out
}

/// One line per (benchmark, scheme): pass/fail counts and crash cycles
/// covered.
pub fn crash_summary(reports: &[(String, SweepReport)]) -> String {
    use crate::crashcheck::Verdict;
    let mut out = String::new();
    for (bench, r) in reports {
        let status = if r.count(Verdict::Skipped) > 0 {
            "skipped: no guarantee".to_string()
        } else if r.passed() {
            "ok".to_string()
        } else {
            let p = r.first_failure().expect("failed report has a failure");
            format!("FAILED at cycle {}: {}", p.cycle, p.detail)
        };
        out += &format!(
            "{bench:<28} {:<7} images={:<6} cycles={:<8} pass={:<6} fail={:<4} {status}\n",
            r.scheme,
            r.points.len(),
            r.cycles_checked(),
            r.count(Verdict::Pass),
            r.count(Verdict::Fail) + r.count(Verdict::Aborted),
        );
    }
    out
}

/// Writes `text` to `path`, or to stdout when `path` is `None` or `-`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).map_err(|e| HarnessError::io(p, e))
        }
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}
