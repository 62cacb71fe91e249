use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asapsim::crashcheck::CrashMode;
use asapsim::harness::{self, Benchmark, Comparison, HarnessError, Settings};
use asapsim::machine::run;
use asapsim::schemes::SchemeKind;
use asapsim::trace::{render, WorkloadSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "asapsim",
    version,
    about = "Persistent-memory logging simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file (default: $ASAPSIM_CONFIG)
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set pm_banks=8`
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = key_value)]
    overrides: Vec<(String, String)>,
    /// Trace file (repeatable)
    #[arg(long)]
    trace: Vec<PathBuf>,
    /// Generated workload, e.g. `kind=swap,regions=8` (repeatable)
    #[arg(long)]
    workload: Vec<WorkloadSpec>,
    /// Named benchmark suite: default or small
    #[arg(long)]
    suite: Option<String>,
    /// Output file; `-` or absent means stdout
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trace under one scheme and print a metrics CSV row
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, short)]
        scheme: SchemeKind,
        /// Also write the event log as CSV
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run several schemes over a set of benchmarks
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<SchemeKind>>,
        /// Print an aligned table instead of CSV
        #[arg(long)]
        table: bool,
    },
    /// Compare schemes at several PM write latencies
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<SchemeKind>>,
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
        latencies: Option<Vec<u64>>,
        /// Directory for two-column plot data files
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Crash every scheme at many cycles and check recovery
    Crashtest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<SchemeKind>>,
        #[arg(long, value_enum, default_value_t = Mode::Exhaustive)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write per-crash-point verdicts as CSV
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Generate a synthetic trace
    Gen {
        #[arg(long, short)]
        workload: WorkloadSpec,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exhaustive,
    Sampled,
}

fn key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

impl Common {
    fn settings(&self) -> Result<Settings, HarnessError> {
        Settings::resolve(self.config.as_deref(), &self.overrides)
    }

    fn benchmarks(&self, fallback: &str) -> Result<Vec<Benchmark>, HarnessError> {
        let mut out = Vec::new();
        for path in &self.trace {
            out.push(Benchmark::from_file(path)?);
        }
        for spec in &self.workload {
            out.push(Benchmark::from_spec(spec)?);
        }
        if let Some(name) = &self.suite {
            out.extend(harness::suite(name)?);
        }
        if out.is_empty() {
            out = harness::suite(fallback)?;
        }
        Ok(out)
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("asapsim: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.cmd {
        Cmd::Run {
            common,
            scheme,
            events,
        } => {
            let settings = common.settings()?;
            let benches = common.benchmarks("default")?;
            let mut records = Vec::new();
            for b in &benches {
                let cfg = &settings.machine;
                let s = scheme.build(
                    b.trace.thread_count(),
                    cfg.log_capacity_entries_per_thread,
                    settings.opts,
                );
                let out = run(&b.trace, s, cfg).map_err(|source| HarnessError::Run {
                    benchmark: b.name.clone(),
                    scheme,
                    source,
                })?;
                if let Some(path) = &events {
                    harness::emit(Some(path), &out.events.to_csv())?;
                }
                records.push(harness::RunRecord {
                    benchmark: b.name.clone(),
                    scheme,
                    latency: cfg.pm_write_latency,
                    metrics: out.metrics,
                });
            }
            let names = benches.iter().map(|b| b.name.clone()).collect();
            let c = Comparison::new(names, vec![scheme], records);
            harness::emit(common.out(), &c.csv(false))?;
        }
        Cmd::Compare {
            common,
            schemes,
            table,
        } => {
            let settings = common.settings()?;
            let schemes = schemes.unwrap_or_else(|| settings.schemes.clone());
            let benches = common.benchmarks("default")?;
            let c = harness::compare(&benches, &schemes, &settings)?;
            let text = if table { c.to_table() } else { c.to_csv() };
            harness::emit(common.out(), &text)?;
        }
        Cmd::Sweep {
            common,
            schemes,
            latencies,
            plot_dir,
        } => {
            let settings = common.settings()?;
            let schemes = schemes.unwrap_or_else(|| settings.schemes.clone());
            let latencies = latencies.unwrap_or_else(|| settings.latencies.clone());
            let benches = common.benchmarks("default")?;
            let sweep = harness::latency_sweep(&benches, &schemes, &latencies, &settings)?;
            harness::emit(common.out(), &sweep.to_csv())?;
            if let Some(dir) = plot_dir {
                sweep.write_plot_data(&dir)?;
            }
        }
        Cmd::Crashtest {
            common,
            schemes,
            mode,
            samples,
            seed,
            verdicts,
        } => {
            let settings = common.settings()?;
            let schemes = schemes.unwrap_or_else(|| settings.schemes.clone());
            let benches = common.benchmarks("small")?;
            let mode = match mode {
                Mode::Exhaustive => CrashMode::Exhaustive,
                Mode::Sampled => CrashMode::Sampled { samples, seed },
            };
            let reports = harness::crashtest(&benches, &schemes, mode, &settings)?;
            harness::emit(common.out(), &harness::crash_summary(&reports))?;
            if let Some(path) = &verdicts {
                harness::emit(Some(path), &harness::crash_csv(&reports))?;
            }
            if reports.iter().any(|(_, r)| !r.passed()) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Gen { workload, out } => {
            let b = Benchmark::from_spec(&workload)?;
            harness::emit(out.as_deref(), &render(&b.trace))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
