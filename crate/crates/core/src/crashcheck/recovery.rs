use std::collections::BTreeSet;

use thiserror::Error;

use crate::machine::PmImage;
use crate::schemes::Recovery;
use crate::trace::{Line, RegionId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoveryReport {
    /// Regions whose commit is durable, per the persisted commit marks.
    pub committed: BTreeSet<RegionId>,
    /// Regions with persisted log entries that recovery undid or discarded.
    pub rolled_back: BTreeSet<RegionId>,
    pub recovered: PmImage,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecoveryError {
    #[error("{line} holds data of uncommitted {region} that was persisted before its log entry")]
    DataAheadOfLog { line: Line, region: RegionId },
    #[error("{line} holds redo data of {region}, which is not committed")]
    UncommittedInstall { line: Line, region: RegionId },
    #[error("{line} holds redo data of {region}, which has no log entry for it")]
    InstallWithoutLog { line: Line, region: RegionId },
}

/// Regions whose commit is durable: on each thread, every sequence number
/// up to the persisted mark.
pub fn committed_regions(image: &PmImage) -> BTreeSet<RegionId> {
    let mut out = BTreeSet::new();
    for (t, &mark) in image.commit_marks.iter().enumerate() {
        for s in 0..=mark {
            out.insert(RegionId::new(t, s as u64));
        }
    }
    out
}

/// Undo recovery: rolls back every region without a durable commit by
/// applying its logged pre-images in reverse persist order.
pub fn recover_undo(image: &PmImage) -> Result<RecoveryReport, RecoveryError> {
    for (line, origin) in &image.origin {
        for &region in &origin.regions {
            if image.is_committed(region) {
                continue;
            }
            let logged = image.logs[region.thread]
                .iter()
                .any(|e| e.region == region && e.line == *line && e.stamp < origin.stamp);
            if !logged {
                return Err(RecoveryError::DataAheadOfLog {
                    line: *line,
                    region,
                });
            }
        }
    }
    let mut undo: Vec<_> = image
        .logs
        .iter()
        .flatten()
        .filter(|e| !image.is_committed(e.region))
        .collect();
    undo.sort_by_key(|e| std::cmp::Reverse(e.stamp));
    let mut recovered = image.clone();
    let mut rolled_back = BTreeSet::new();
    for e in undo {
        recovered.data.insert(e.line, e.words);
        recovered.origin.remove(&e.line);
        rolled_back.insert(e.region);
    }
    Ok(RecoveryReport {
        committed: committed_regions(image),
        rolled_back,
        recovered,
    })
}

/// Redo recovery: replays every committed region's logged post-images in
/// persist order and ignores the rest.
pub fn recover_redo(image: &PmImage) -> Result<RecoveryReport, RecoveryError> {
    for (line, origin) in &image.origin {
        for &region in &origin.regions {
            if !image.is_committed(region) {
                return Err(RecoveryError::UncommittedInstall {
                    line: *line,
                    region,
                });
            }
            let logged = image.logs[region.thread]
                .iter()
                .any(|e| e.region == region && e.line == *line);
            if !logged {
                return Err(RecoveryError::InstallWithoutLog {
                    line: *line,
                    region,
                });
            }
        }
    }
    let mut redo: Vec<_> = image.logs.iter().flatten().collect();
    redo.sort_by_key(|e| e.stamp);
    let mut recovered = image.clone();
    let mut rolled_back = BTreeSet::new();
    for e in redo {
        if image.is_committed(e.region) {
            recovered.data.insert(e.line, e.words);
            recovered.origin.remove(&e.line);
        } else {
            rolled_back.insert(e.region);
        }
    }
    Ok(RecoveryReport {
        committed: committed_regions(image),
        rolled_back,
        recovered,
    })
}

/// Runs the procedure a scheme's image needs. Without a log the image is
/// returned unchanged.
pub fn recover(kind: Recovery, image: &PmImage) -> Result<RecoveryReport, RecoveryError> {
    match kind {
        Recovery::Undo => recover_undo(image),
        Recovery::Redo => recover_redo(image),
        Recovery::None => Ok(RecoveryReport {
            committed: BTreeSet::new(),
            rolled_back: BTreeSet::new(),
            recovered: image.clone(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{Completion, Effect, LogEntry};

    fn r(t: usize, s: u64) -> RegionId {
        RegionId::new(t, s)
    }

    fn build(effects: Vec<Effect>) -> PmImage {
        let mut img = PmImage::new(2);
        for (i, effect) in effects.into_iter().enumerate() {
            img.apply(&Completion {
                time: i as u64,
                stamp: i as u64,
                op: crate::machine::OpId(i),
                effect,
            });
        }
        img
    }

    fn log(region: RegionId, line: u64, v: u64, stamp: u64) -> Effect {
        Effect::Log {
            thread: region.thread,
            entry: LogEntry {
                region,
                line: Line(line),
                words: [v, 0, 0, 0, 0, 0, 0, 0],
                stamp,
            },
        }
    }

    fn data(line: u64, v: u64, regions: Vec<RegionId>) -> Effect {
        Effect::Data {
            line: Line(line),
            words: [v, 0, 0, 0, 0, 0, 0, 0],
            regions,
        }
    }

    #[test]
    fn empty_image_recovers_to_itself() {
        let img = PmImage::new(2);
        assert_eq!(recover_undo(&img).unwrap().recovered, img);
        assert_eq!(recover_redo(&img).unwrap().recovered, img);
    }

    #[test]
    fn undo_restores_uncommitted_pre_image() {
        let img = build(vec![log(r(0, 0), 5, 0, 0), data(5, 9, vec![r(0, 0)])]);
        let rep = recover_undo(&img).unwrap();
        assert_eq!(rep.recovered.data[&Line(5)][0], 0);
        assert!(rep.rolled_back.contains(&r(0, 0)));
        assert!(rep.committed.is_empty());
    }

    #[test]
    fn undo_keeps_committed_and_unwinds_dependent() {
        let img = build(vec![
            log(r(0, 0), 5, 0, 0),
            data(5, 1, vec![r(0, 0)]),
            Effect::Mark { thread: 0, seq: 0 },
            log(r(1, 0), 5, 1, 3),
            data(5, 2, vec![r(1, 0)]),
        ]);
        let rep = recover_undo(&img).unwrap();
        assert_eq!(rep.recovered.data[&Line(5)][0], 1);
        assert_eq!(rep.committed, BTreeSet::from([r(0, 0)]));
        assert_eq!(rep.rolled_back, BTreeSet::from([r(1, 0)]));
    }

    #[test]
    fn undo_flags_data_ahead_of_log() {
        let img = build(vec![data(5, 1, vec![r(0, 0)]), log(r(0, 0), 5, 0, 1)]);
        assert!(matches!(
            recover_undo(&img),
            Err(RecoveryError::DataAheadOfLog { .. })
        ));
    }

    #[test]
    fn redo_replays_committed_only() {
        let img = build(vec![
            log(r(0, 0), 5, 7, 0),
            Effect::Mark { thread: 0, seq: 0 },
            log(r(0, 1), 6, 8, 2),
        ]);
        let rep = recover_redo(&img).unwrap();
        assert_eq!(rep.recovered.data[&Line(5)][0], 7);
        assert!(!rep.recovered.data.contains_key(&Line(6)));
        assert_eq!(rep.rolled_back, BTreeSet::from([r(0, 1)]));
    }

    #[test]
    fn redo_later_entry_wins() {
        let img = build(vec![
            log(r(0, 0), 5, 7, 0),
            Effect::Mark { thread: 0, seq: 0 },
            log(r(1, 0), 5, 9, 2),
            Effect::Mark { thread: 1, seq: 0 },
        ]);
        assert_eq!(recover_redo(&img).unwrap().recovered.data[&Line(5)][0], 9);
    }

    #[test]
    fn recovery_is_idempotent() {
        let img = build(vec![
            log(r(0, 0), 5, 0, 0),
            data(5, 1, vec![r(0, 0)]),
            log(r(1, 0), 5, 1, 2),
            data(5, 2, vec![r(1, 0), r(0, 0)]),
        ]);
        let once = recover_undo(&img).unwrap().recovered;
        let twice = recover_undo(&once).unwrap().recovered;
        assert_eq!(once, twice);
        assert_eq!(once.data[&Line(5)][0], 0);
    }
}
