use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::machine::DataState;
use crate::trace::{Line, RegionBody, RegionId, Trace, Words};

/// Default cap on how many per-thread prefix combinations are enumerated.
pub const MAX_COMBINATIONS: u64 = 200_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("trace has {combinations} prefix combinations, over the limit of {limit}")]
    TooLarge { combinations: u64, limit: u64 },
    #[error("serialization order names {0}, which the trace does not contain")]
    UnknownRegion(RegionId),
    #[error("serialization order lists {listed} of {total} regions")]
    IncompleteOrder { listed: usize, total: usize },
}

/// Dependence structure of a trace under one serialization of its regions.
#[derive(Clone, Debug)]
pub struct Dependences {
    regions: Vec<RegionBody>,
    index: HashMap<RegionId, usize>,
    /// Positions in the serialization order.
    order: Vec<usize>,
    deps: Vec<Vec<usize>>,
    per_thread: Vec<usize>,
}

impl Dependences {
    /// `order` lists every region in the order their effects serialize;
    /// with locks that is the order in which the regions began.
    pub fn new(trace: &Trace, order: &[RegionId]) -> Result<Self, OracleError> {
        let regions = trace.regions();
        let index: HashMap<RegionId, usize> =
            regions.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        if order.len() != regions.len() {
            return Err(OracleError::IncompleteOrder {
                listed: order.len(),
                total: regions.len(),
            });
        }
        let order: Vec<usize> = order
            .iter()
            .map(|r| index.get(r).copied().ok_or(OracleError::UnknownRegion(*r)))
            .collect::<Result<_, _>>()?;
        let mut deps = vec![Vec::new(); regions.len()];
        for (pos, &b) in order.iter().enumerate() {
            for &a in &order[..pos] {
                let (ra, rb) = (&regions[a], &regions[b]);
                let program = ra.id.thread == rb.id.thread && ra.id.seq < rb.id.seq;
                let data = ra.stores().any(|(l, _, _)| rb.touches_line(l));
                if program || data {
                    deps[b].push(a);
                }
            }
        }
        let mut per_thread = vec![0; trace.thread_count()];
        for r in &regions {
            per_thread[r.id.thread] += 1;
        }
        Ok(Dependences {
            regions,
            index,
            order,
            deps,
            per_thread,
        })
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Regions per thread.
    pub fn per_thread(&self) -> &[usize] {
        &self.per_thread
    }

    /// Regions `region` depends on.
    pub fn of(&self, region: RegionId) -> Vec<RegionId> {
        self.index
            .get(&region)
            .map(|&i| self.deps[i].iter().map(|&a| self.regions[a].id).collect())
            .unwrap_or_default()
    }

    /// The first member of `set` missing one of its dependences, with that
    /// dependence.
    pub fn closure_gap(&self, set: &BTreeSet<RegionId>) -> Option<(RegionId, RegionId)> {
        for r in set {
            for d in self.of(*r) {
                if !set.contains(&d) {
                    return Some((*r, d));
                }
            }
        }
        None
    }

    /// True when `set` holds, for each thread, its first k regions.
    pub fn is_prefix(&self, set: &BTreeSet<RegionId>) -> bool {
        set.iter()
            .all(|r| r.seq == 0 || set.contains(&RegionId::new(r.thread, r.seq - 1)))
    }

    /// Data state after applying the stores of `set`'s regions in
    /// serialization order.
    pub fn state_of(&self, set: &BTreeSet<RegionId>) -> DataState {
        let mut data: std::collections::BTreeMap<Line, Words> = Default::default();
        for &i in &self.order {
            if set.contains(&self.regions[i].id) {
                for (line, word, value) in self.regions[i].stores() {
                    data.entry(line).or_default()[word] = value;
                }
            }
        }
        crate::machine::normalize(&data)
    }
}

/// Every state a correct crash can leave: the data produced by each
/// dependence-closed, per-thread-prefix subset of regions.
#[derive(Clone, Debug)]
pub struct ValidStateSet {
    pub subsets: Vec<BTreeSet<RegionId>>,
    pub states: HashSet<DataState>,
}

impl ValidStateSet {
    pub fn contains(&self, state: &DataState) -> bool {
        self.states.contains(state)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Brute-force enumeration of the valid crash states of `trace`, with
/// regions serialized in `order`.
pub fn oracle(trace: &Trace, order: &[RegionId]) -> Result<ValidStateSet, OracleError> {
    oracle_with_limit(trace, order, MAX_COMBINATIONS)
}

pub fn oracle_with_limit(
    trace: &Trace,
    order: &[RegionId],
    limit: u64,
) -> Result<ValidStateSet, OracleError> {
    let deps = Dependences::new(trace, order)?;
    enumerate(&deps, limit)
}

pub fn enumerate(deps: &Dependences, limit: u64) -> Result<ValidStateSet, OracleError> {
    let counts = deps.per_thread();
    let combinations = counts
        .iter()
        .try_fold(1u64, |acc, &n| acc.checked_mul(n as u64 + 1))
        .unwrap_or(u64::MAX);
    if combinations > limit {
        return Err(OracleError::TooLarge {
            combinations,
            limit,
        });
    }
    let mut subsets = Vec::new();
    let mut states = HashSet::new();
    let mut prefix = vec![0usize; counts.len()];
    loop {
        let set: BTreeSet<RegionId> = prefix
            .iter()
            .enumerate()
            .flat_map(|(t, &k)| (0..k as u64).map(move |s| RegionId::new(t, s)))
            .collect();
        if deps.closure_gap(&set).is_none() {
            states.insert(deps.state_of(&set));
            subsets.push(set);
        }
        let mut t = 0;
        loop {
            if t == prefix.len() {
                return Ok(ValidStateSet { subsets, states });
            }
            if prefix[t] < counts[t] {
                prefix[t] += 1;
                break;
            }
            prefix[t] = 0;
            t += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace;

    fn begin_order(trace: &Trace) -> Vec<RegionId> {
        trace.regions().iter().map(|r| r.id).collect()
    }

    #[test]
    fn empty_trace_has_only_initial_state() {
        let t = Trace::new(vec![]);
        let v = oracle(&t, &[]).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.contains(&DataState::new()));
    }

    #[test]
    fn program_order_excludes_later_region_alone() {
        let t = parse_trace("T0 BEGIN\nT0 ST 0x40 0 1\nT0 END\nT0 BEGIN\nT0 ST 0x80 0 2\nT0 END\n")
            .unwrap();
        let v = oracle(&t, &begin_order(&t)).unwrap();
        assert_eq!(v.len(), 3);
        let only_second = DataState::from([(Line(2), [2, 0, 0, 0, 0, 0, 0, 0])]);
        assert!(!v.contains(&only_second));
    }

    #[test]
    fn consumer_needs_producer() {
        let t = parse_trace(
            "T0 LOCK 0\nT0 BEGIN\nT0 ST 0x40 0 1\nT0 END\nT0 UNLOCK 0\n\
             T1 LOCK 0\nT1 BEGIN\nT1 LD 0x40 0\nT1 ST 0x80 0 2\nT1 END\nT1 UNLOCK 0\n",
        )
        .unwrap();
        let order = vec![RegionId::new(0, 0), RegionId::new(1, 0)];
        let v = oracle(&t, &order).unwrap();
        assert_eq!(v.subsets.len(), 3);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn refuses_huge_enumeration() {
        let mut text = String::new();
        for t in 0..3 {
            for _ in 0..10 {
                text += &format!("T{t} BEGIN\nT{t} END\n");
            }
        }
        let trace = parse_trace(&text).unwrap();
        let order = begin_order(&trace);
        assert!(matches!(
            oracle_with_limit(&trace, &order, 1000),
            Err(OracleError::TooLarge {
                combinations: 1331,
                ..
            })
        ));
    }
}
