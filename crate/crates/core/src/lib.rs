//! Deterministic discrete-event simulator of persistent-memory write-ahead
//! logging. It models the ASAP asynchronous commit protocol next to four
//! baselines, injects crashes at any cycle, recovers, and checks every
//! recovered state against a brute-force oracle.

pub mod asap;
pub mod crashcheck;
pub mod harness;
pub mod machine;
pub mod schemes;
pub mod trace;
