use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::oracle::{enumerate, Dependences, OracleError, ValidStateSet, MAX_COMBINATIONS};
use super::recovery::recover;
use crate::asap::AsapOptions;
use crate::machine::{run, run_unchecked, Cycle, MachineConfig, RunOutput};
use crate::schemes::{Recovery, SchemeKind};
use crate::trace::{RegionId, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashMode {
    /// Every cycle from 0 to the last persist completion.
    Exhaustive,
    /// `samples` cycles drawn uniformly from the same range.
    Sampled { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Fail,
    /// The scheme promises nothing after a crash.
    Skipped,
    /// The run itself failed, so there was nothing to crash.
    Aborted,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
            Verdict::Aborted => "aborted",
        }
    }
}

/// Outcome of crashing at `cycle`. In exhaustive mode one point stands for
/// every cycle up to `last_cycle`, all of which leave the same image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrashPoint {
    pub cycle: Cycle,
    pub last_cycle: Cycle,
    pub committed: usize,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub scheme: &'static str,
    pub points: Vec<CrashPoint>,
    /// Number of valid states, when the oracle was enumerated.
    pub oracle_states: Option<usize>,
    pub run: Option<RunOutput>,
}

impl SweepReport {
    fn single(scheme: &'static str, verdict: Verdict, detail: String) -> Self {
        SweepReport {
            scheme,
            points: vec![CrashPoint {
                cycle: 0,
                last_cycle: 0,
                committed: 0,
                verdict,
                detail,
            }],
            oracle_states: None,
            run: None,
        }
    }

    pub fn count(&self, verdict: Verdict) -> usize {
        self.points.iter().filter(|p| p.verdict == verdict).count()
    }

    /// Crash cycles covered by the points.
    pub fn cycles_checked(&self) -> u64 {
        self.points
            .iter()
            .filter(|p| matches!(p.verdict, Verdict::Pass | Verdict::Fail))
            .map(|p| p.last_cycle - p.cycle + 1)
            .sum()
    }

    /// No point failed or aborted.
    pub fn passed(&self) -> bool {
        self.points
            .iter()
            .all(|p| matches!(p.verdict, Verdict::Pass | Verdict::Skipped))
    }

    pub fn first_failure(&self) -> Option<&CrashPoint> {
        self.points
            .iter()
            .find(|p| matches!(p.verdict, Verdict::Fail | Verdict::Aborted))
    }

    /// Events of the run in the `window` cycles before `cycle`, as CSV.
    pub fn context(&self, cycle: Cycle, window: Cycle) -> String {
        let Some(run) = &self.run else {
            return String::new();
        };
        let csv = run.events.to_csv();
        let mut lines = csv.lines();
        let mut out = format!("{}\n", lines.next().unwrap_or_default());
        for (line, e) in lines.zip(run.events.events()) {
            if e.cycle + window >= cycle && e.cycle <= cycle {
                out += line;
                out.push('\n');
            }
        }
        out
    }

    /// Appends `crash_cycle,scheme,committed_regions,verdict,detail` rows.
    pub fn write_csv_rows(&self, out: &mut String) {
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.cycle,
                self.scheme,
                p.committed,
                p.verdict.name(),
                p.detail.replace(',', ";")
            );
        }
    }
}

pub const VERDICT_CSV_HEADER: &str = "crash_cycle,scheme,committed_regions,verdict,detail";

/// Crash-injection campaign for one trace and one scheme.
#[derive(Clone, Debug)]
pub struct CrashTest<'a> {
    trace: &'a Trace,
    scheme: SchemeKind,
    cfg: MachineConfig,
    opts: AsapOptions,
    mode: CrashMode,
    validate: bool,
    limit: u64,
}

impl<'a> CrashTest<'a> {
    pub fn new(trace: &'a Trace, scheme: SchemeKind) -> Self {
        CrashTest {
            trace,
            scheme,
            cfg: MachineConfig::default(),
            opts: AsapOptions::all(),
            mode: CrashMode::Exhaustive,
            validate: true,
            limit: MAX_COMBINATIONS,
        }
    }

    pub fn config(mut self, cfg: MachineConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn options(mut self, opts: AsapOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn mode(mut self, mode: CrashMode) -> Self {
        self.mode = mode;
        self
    }

    /// Runs the trace without validating it first.
    pub fn unchecked(mut self) -> Self {
        self.validate = false;
        self
    }

    pub fn oracle_limit(mut self, limit: u64) -> Self {
        self.limit = limit;
        self
    }

    pub fn run(&self) -> Result<SweepReport, OracleError> {
        if self.scheme.recovery() == Recovery::None {
            return Ok(SweepReport::single(
                self.scheme.name(),
                Verdict::Skipped,
                "no guarantee: scheme has no recovery".into(),
            ));
        }
        let scheme = self.scheme.build(
            self.trace.thread_count(),
            self.cfg.log_capacity_entries_per_thread,
            self.opts,
        );
        let result = if self.validate {
            run(self.trace, scheme, &self.cfg)
        } else {
            run_unchecked(self.trace, scheme, &self.cfg)
        };
        let out = match result {
            Ok(out) => out,
            Err(e) => {
                return Ok(SweepReport::single(
                    self.scheme.name(),
                    Verdict::Aborted,
                    e.to_string(),
                ))
            }
        };
        sweep(self.trace, out, self.mode, self.limit)
    }
}

/// Crashes an existing run at the cycles `mode` selects and checks each
/// recovered image against the oracle.
pub fn sweep(
    trace: &Trace,
    out: RunOutput,
    mode: CrashMode,
    limit: u64,
) -> Result<SweepReport, OracleError> {
    let deps = Dependences::new(trace, &out.region_order)?;
    let valid = match (mode, enumerate(&deps, limit)) {
        (_, Ok(v)) => Some(v),
        (CrashMode::Exhaustive, Err(e)) => return Err(e),
        (CrashMode::Sampled { .. }, Err(_)) => None,
    };

    let end = out.end_cycle();
    let mut changes: Vec<Cycle> = out.completions.iter().map(|c| c.time).collect();
    changes.dedup();
    let spans: Vec<(Cycle, Cycle)> = match mode {
        CrashMode::Exhaustive => {
            let mut starts = vec![0];
            starts.extend(changes.iter().copied().filter(|&t| t > 0));
            starts
                .iter()
                .enumerate()
                .map(|(i, &s)| (s, starts.get(i + 1).map_or(end, |&n| n - 1)))
                .collect()
        }
        CrashMode::Sampled { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks: BTreeSet<Cycle> = (0..samples).map(|_| rng.gen_range(0..=end)).collect();
            picks.into_iter().map(|c| (c, c)).collect()
        }
    };
    let points = spans
        .par_iter()
        .map(|&(cycle, last)| {
            let (verdict, committed, detail) = check(
                &deps,
                valid.as_ref(),
                out.recovery,
                &out.crash_snapshot(cycle),
            );
            let detail = match (verdict, last > cycle) {
                (Verdict::Pass, true) => format!("same image through cycle {last}"),
                _ => detail,
            };
            CrashPoint {
                cycle,
                last_cycle: last,
                committed,
                verdict,
                detail,
            }
        })
        .collect();
    Ok(SweepReport {
        scheme: out.scheme,
        points,
        oracle_states: valid.map(|v| v.len()),
        run: Some(out),
    })
}

fn check(
    deps: &Dependences,
    valid: Option<&ValidStateSet>,
    recovery: Recovery,
    image: &crate::machine::PmImage,
) -> (Verdict, usize, String) {
    let report = match recover(recovery, image) {
        Ok(r) => r,
        Err(e) => return (Verdict::Fail, 0, format!("recovery audit: {e}")),
    };
    let per_thread = deps.per_thread();
    let committed: BTreeSet<RegionId> = report
        .committed
        .iter()
        .copied()
        .filter(|r| (r.seq as usize) < per_thread.get(r.thread).copied().unwrap_or(0))
        .collect();
    let n = committed.len();
    if !deps.is_prefix(&committed) {
        return (
            Verdict::Fail,
            n,
            "committed set is not a per-thread prefix".into(),
        );
    }
    if let Some((r, d)) = deps.closure_gap(&committed) {
        return (
            Verdict::Fail,
            n,
            format!("{r} committed without {d}, which it depends on"),
        );
    }
    let state = report.recovered.data_state();
    if let Some(valid) = valid {
        if !valid.contains(&state) {
            return (
                Verdict::Fail,
                n,
                "recovered state is not a valid crash state".into(),
            );
        }
    }
    if state != deps.state_of(&committed) {
        return (
            Verdict::Fail,
            n,
            "recovered state differs from the committed regions' effects".into(),
        );
    }
    (Verdict::Pass, n, String::new())
}
