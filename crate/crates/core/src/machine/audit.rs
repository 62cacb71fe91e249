//! Post-run checks over the event log and persist-operation records.

use std::collections::HashMap;

use super::{EventKind, OpState, PersistKind, PersistOp, RunOutput, WriteCategory};
use crate::schemes::Recovery;
use crate::trace::RegionId;

/// `a` completed no later than `b` started, and was logged first.
fn before(a: &PersistOp, b: &PersistOp) -> bool {
    match (
        a.complete_time,
        a.complete_event,
        b.start_time,
        b.start_event,
    ) {
        (Some(ac), Some(ae), Some(bs), Some(be)) => ac <= bs && ae < be,
        _ => false,
    }
}

/// Event index of the last issue or coalesce of each op: the point after
/// which its payload no longer changed through obligations.
fn last_update(out: &RunOutput) -> HashMap<usize, usize> {
    let mut m = HashMap::new();
    for (i, e) in out.events.events().iter().enumerate() {
        if matches!(e.kind, EventKind::OpIssue | EventKind::OpCoalesce) {
            if let Some(op) = e.op {
                m.insert(op.0, i);
            }
        }
    }
    m
}

/// Write-ahead rule. Undo: a data write carrying region R's value of line L
/// starts only after every log write of R for L made before the data write
/// took its final payload. Redo: a data write carrying R starts only after
/// R's commit mark persisted.
pub fn wal_violations(out: &RunOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let updates = last_update(out);
    let marks: HashMap<RegionId, &PersistOp> = out
        .ops
        .iter()
        .filter(|o| o.kind == PersistKind::CommitMark)
        .map(|o| (o.region.unwrap(), o))
        .collect();
    let mut lpos: HashMap<(RegionId, u64), Vec<&PersistOp>> = HashMap::new();
    for o in out.ops.iter().filter(|o| o.kind == PersistKind::Lpo) {
        lpos.entry((o.region.unwrap(), o.line.0))
            .or_default()
            .push(o);
    }
    for d in out.ops.iter() {
        if d.category != WriteCategory::Data || d.start_time.is_none() {
            continue;
        }
        for r in &d.obligations {
            match out.recovery {
                Recovery::Undo => {
                    let cutoff = updates[&d.id.0];
                    let logs = lpos.get(&(*r, d.line.0)).map(Vec::as_slice).unwrap_or(&[]);
                    if logs.is_empty() {
                        bad.push(format!(
                            "data write op{} carries {r} on {} without a log entry",
                            d.id.0, d.line
                        ));
                    }
                    for l in logs.iter().filter(|l| l.issue_event < cutoff) {
                        if !before(l, d) {
                            bad.push(format!(
                                "data write op{} on {} started before log write op{} of {r}",
                                d.id.0, d.line, l.id.0
                            ));
                        }
                    }
                }
                Recovery::Redo => match marks.get(r) {
                    Some(m) if before(m, d) => {}
                    _ => bad.push(format!(
                        "data write op{} on {} started before {r} committed",
                        d.id.0, d.line
                    )),
                },
                Recovery::None => {}
            }
        }
    }
    bad
}

/// Each bank services one write at a time, and a write starts ahead of an
/// earlier-issued write of the same bank only while that one is held.
pub fn bank_violations(out: &RunOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let ops = &out.ops;
    let mut busy_until: HashMap<usize, (u64, usize)> = HashMap::new();
    let mut queues: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut done = vec![false; ops.len()];
    for e in out.events.events() {
        let Some(id) = e.op.map(|o| o.0) else {
            continue;
        };
        let bank = ops[id].bank;
        match e.kind {
            EventKind::OpIssue => queues.entry(bank).or_default().push(id),
            EventKind::OpDrop => {
                queues.entry(bank).or_default().retain(|&o| o != id);
                done[id] = true;
            }
            EventKind::OpComplete => done[id] = true,
            EventKind::OpStart => {
                let q = queues.entry(bank).or_default();
                q.retain(|&o| o != id);
                for &a in q
                    .iter()
                    .filter(|&&a| ops[a].issue_event < ops[id].issue_event)
                {
                    if ops[a].holds.iter().all(|h| done[h.0]) {
                        bad.push(format!(
                            "bank {bank}: op{id} overtook eligible earlier op{a}"
                        ));
                    }
                }
                if let Some((until, prev)) = busy_until.get(&bank) {
                    if e.cycle < *until {
                        bad.push(format!("bank {bank}: op{prev} and op{id} overlap"));
                    }
                }
                busy_until.insert(bank, (ops[id].complete_time.unwrap_or(u64::MAX), id));
            }
            _ => {}
        }
    }
    bad
}

/// Commit ordering. A region's commit mark starts only after its log
/// writes and the data writes carrying it persisted; regions of a thread
/// commit in program order; a region commits after every region it
/// depends on, and issues its own commit mark only after that.
pub fn commit_violations(out: &RunOutput) -> Vec<String> {
    let mut bad = Vec::new();
    let mut commit_at: HashMap<RegionId, usize> = HashMap::new();
    for (i, e) in out.events.events().iter().enumerate() {
        if e.kind == EventKind::Commit {
            commit_at.insert(e.region.unwrap(), i);
        }
    }
    let marks: HashMap<RegionId, &PersistOp> = out
        .ops
        .iter()
        .filter(|o| o.kind == PersistKind::CommitMark)
        .map(|o| (o.region.unwrap(), o))
        .collect();
    for m in out.ops.iter().filter(|o| o.kind == PersistKind::CommitMark) {
        let r = m.region.unwrap();
        for o in out.ops.iter() {
            let relevant = match (o.kind, out.recovery) {
                (PersistKind::Lpo, _) => o.region == Some(r),
                (PersistKind::Dpo, Recovery::Undo) => {
                    o.category == WriteCategory::Data
                        && o.state != OpState::Dropped
                        && o.obligations.contains(&r)
                }
                _ => false,
            };
            if relevant && !before(o, m) {
                bad.push(format!(
                    "{r}: commit mark op{} not after op{}",
                    m.id.0, o.id.0
                ));
            }
        }
    }
    let mut last: HashMap<usize, (u64, usize)> = HashMap::new();
    let mut committed: Vec<(&RegionId, &usize)> = commit_at.iter().collect();
    committed.sort_by_key(|(_, i)| **i);
    for (r, i) in committed {
        if let Some((seq, _)) = last.get(&r.thread) {
            if *seq > r.seq {
                bad.push(format!("{r} committed after a later region of its thread"));
            }
        }
        last.insert(r.thread, (r.seq, *i));
    }
    for e in out
        .events
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::DepEdge)
    {
        let (r, p) = (e.region.unwrap(), e.peer.unwrap());
        if let Some(m) = marks.get(&r) {
            if commit_at.get(&p).is_none_or(|&a| a > m.issue_event) {
                bad.push(format!("{r} issued its commit mark before {p} committed"));
            }
        }
        match (commit_at.get(&p), commit_at.get(&r)) {
            (Some(a), Some(b)) if a < b => {}
            (None, None) => {}
            (None, Some(_)) | (Some(_), Some(_)) => {
                bad.push(format!("{r} committed before {p}, which it depends on"))
            }
            (Some(_), None) => {}
        }
    }
    bad
}

/// Cycles threads spent between reaching a region end and retiring it.
pub fn end_stall(out: &RunOutput) -> u64 {
    let mut ends = HashMap::new();
    let mut total = 0;
    for e in out.events.events() {
        match e.kind {
            EventKind::RegionEnd => {
                ends.insert(e.region.unwrap(), e.cycle);
            }
            EventKind::EndRetire => total += e.cycle - ends[&e.region.unwrap()],
            _ => {}
        }
    }
    total
}

/// All audits at once.
pub fn violations(out: &RunOutput) -> Vec<String> {
    let mut v = wal_violations(out);
    v.extend(bank_violations(out));
    v.extend(commit_violations(out));
    v
}
