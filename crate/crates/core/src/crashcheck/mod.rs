//! Crash injection, recovery and the brute-force oracle of valid crash
//! states.

mod oracle;
mod recovery;
mod sweep;

pub use oracle::{
    enumerate, oracle, oracle_with_limit, Dependences, OracleError, ValidStateSet, MAX_COMBINATIONS,
};
pub use recovery::{
    committed_regions, recover, recover_redo, recover_undo, RecoveryError, RecoveryReport,
};
pub use sweep::{
    sweep, CrashMode, CrashPoint, CrashTest, SweepReport, Verdict, VERDICT_CSV_HEADER,
};
