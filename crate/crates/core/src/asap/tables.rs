//! The four hardware structures ASAP adds: per-thread log registers, the
//! last-writer table, per-region write sets and the active region table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::schemes::LogRing;
use crate::trace::{Line, RegionId};

/// Per-thread log ring and the volatile copy of the commit register.
#[derive(Clone, Debug)]
pub struct ThreadLogRegisters {
    pub ring: LogRing,
    pub committed_seq: Option<u64>,
    /// Most recent region begun on this thread.
    pub last_region: Option<RegionId>,
}

impl ThreadLogRegisters {
    pub fn new(capacity: usize) -> Self {
        ThreadLogRegisters {
            ring: LogRing::new(capacity),
            committed_seq: None,
            last_region: None,
        }
    }
}

/// Line -> the uncommitted region that stored to it most recently.
#[derive(Clone, Debug, Default)]
pub struct LastWriterTable {
    map: HashMap<Line, RegionId>,
}

impl LastWriterTable {
    pub fn get(&self, line: Line) -> Option<RegionId> {
        self.map.get(&line).copied()
    }

    pub fn set(&mut self, line: Line, region: RegionId) {
        self.map.insert(line, region);
    }

    /// Removes the entries of `lines` that still name `region`.
    pub fn purge<'a>(&mut self, region: RegionId, lines: impl IntoIterator<Item = &'a Line>) {
        for line in lines {
            if self.map.get(line) == Some(&region) {
                self.map.remove(line);
            }
        }
    }

    pub fn regions(&self) -> impl Iterator<Item = RegionId> + '_ {
        self.map.values().copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// What one region wrote and what it still waits for.
#[derive(Clone, Debug, Default)]
pub struct RegionWriteSet {
    /// Lines stored, with the `logged` flag.
    pub lines: BTreeMap<Line, bool>,
    pub outstanding_lpos: usize,
    /// Per line, how many carriers of this region's value (dirty ownership,
    /// a waiting slot after a drop, or an incomplete data write) remain.
    pub obligations: BTreeMap<Line, u32>,
}

impl RegionWriteSet {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn obligations_met(&self) -> bool {
        self.obligations.values().all(|&n| n == 0)
    }

    pub fn add_obligation(&mut self, line: Line) {
        *self.obligations.entry(line).or_default() += 1;
    }

    pub fn discharge(&mut self, line: Line) {
        let n = self
            .obligations
            .get_mut(&line)
            .expect("discharged line has an obligation");
        *n = n.checked_sub(1).expect("obligation count underflow");
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionState {
    Active,
    Pending,
}

#[derive(Clone, Debug)]
pub struct RegionEntry {
    pub state: RegionState,
    pub depends_on: BTreeSet<RegionId>,
    pub dependents: BTreeSet<RegionId>,
    pub write_set: RegionWriteSet,
    pub mark: Option<crate::machine::OpId>,
}

/// Every uncommitted region and the dependence graph among them. Committed
/// regions are removed.
#[derive(Clone, Debug, Default)]
pub struct ActiveRegionTable {
    regions: BTreeMap<RegionId, RegionEntry>,
}

impl ActiveRegionTable {
    pub fn insert(&mut self, region: RegionId) {
        self.regions.insert(
            region,
            RegionEntry {
                state: RegionState::Active,
                depends_on: BTreeSet::new(),
                dependents: BTreeSet::new(),
                write_set: RegionWriteSet::default(),
                mark: None,
            },
        );
    }

    pub fn contains(&self, region: RegionId) -> bool {
        self.regions.contains_key(&region)
    }

    pub fn get(&self, region: RegionId) -> Option<&RegionEntry> {
        self.regions.get(&region)
    }

    pub fn get_mut(&mut self, region: RegionId) -> Option<&mut RegionEntry> {
        self.regions.get_mut(&region)
    }

    pub fn entry(&mut self, region: RegionId) -> &mut RegionEntry {
        self.regions
            .get_mut(&region)
            .expect("region is uncommitted")
    }

    /// Records `from` depends on `to`. Returns false when the edge is
    /// redundant.
    pub fn add_edge(&mut self, from: RegionId, to: RegionId) -> bool {
        if from == to || !self.contains(to) || !self.contains(from) {
            return false;
        }
        if !self.entry(from).depends_on.insert(to) {
            return false;
        }
        self.entry(to).dependents.insert(from);
        true
    }

    /// Drops a committed region and its edges; returns its dependents.
    pub fn remove(&mut self, region: RegionId) -> (RegionEntry, Vec<RegionId>) {
        let e = self.regions.remove(&region).expect("region is uncommitted");
        for d in &e.dependents {
            if let Some(de) = self.regions.get_mut(d) {
                de.depends_on.remove(&region);
            }
        }
        for p in &e.depends_on {
            if let Some(pe) = self.regions.get_mut(p) {
                pe.dependents.remove(&region);
            }
        }
        let deps = e.dependents.iter().copied().collect();
        (e, deps)
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RegionId, &RegionEntry)> {
        self.regions.iter()
    }

    /// A dependence cycle, if the graph has one.
    pub fn find_cycle(&self) -> Option<Vec<RegionId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: HashMap<RegionId, Mark> = HashMap::new();
        for &root in self.regions.keys() {
            if marks.contains_key(&root) {
                continue;
            }
            let mut path = vec![root];
            let mut iters = vec![self.regions[&root].depends_on.iter()];
            marks.insert(root, Mark::Open);
            while let Some(it) = iters.last_mut() {
                match it.next() {
                    Some(&next) => match marks.get(&next) {
                        Some(Mark::Open) => {
                            let start = path.iter().position(|&r| r == next).unwrap();
                            return Some(path[start..].to_vec());
                        }
                        Some(Mark::Done) => {}
                        None if self.regions.contains_key(&next) => {
                            marks.insert(next, Mark::Open);
                            path.push(next);
                            iters.push(self.regions[&next].depends_on.iter());
                        }
                        None => {}
                    },
                    None => {
                        iters.pop();
                        let r = path.pop().unwrap();
                        marks.insert(r, Mark::Done);
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(t: usize, s: u64) -> RegionId {
        RegionId::new(t, s)
    }

    #[test]
    fn edges_and_removal() {
        let mut art = ActiveRegionTable::default();
        art.insert(r(0, 0));
        art.insert(r(1, 0));
        assert!(art.add_edge(r(1, 0), r(0, 0)));
        assert!(!art.add_edge(r(1, 0), r(0, 0)));
        assert!(!art.add_edge(r(1, 0), r(2, 0)));
        let (_, deps) = art.remove(r(0, 0));
        assert_eq!(deps, vec![r(1, 0)]);
        assert!(art.get(r(1, 0)).unwrap().depends_on.is_empty());
    }

    #[test]
    fn finds_cycle() {
        let mut art = ActiveRegionTable::default();
        for t in 0..3 {
            art.insert(r(t, 0));
        }
        art.add_edge(r(0, 0), r(1, 0));
        art.add_edge(r(1, 0), r(2, 0));
        assert_eq!(art.find_cycle(), None);
        art.add_edge(r(2, 0), r(0, 0));
        let cycle = art.find_cycle().unwrap();
        assert_eq!(cycle.len(), 3);
    }

    #[test]
    fn purge_keeps_newer_writer() {
        let mut lwt = LastWriterTable::default();
        lwt.set(Line(1), r(0, 0));
        lwt.set(Line(2), r(0, 0));
        lwt.set(Line(2), r(1, 0));
        lwt.purge(r(0, 0), &[Line(1), Line(2)]);
        assert_eq!(lwt.get(Line(1)), None);
        assert_eq!(lwt.get(Line(2)), Some(r(1, 0)));
    }
}
