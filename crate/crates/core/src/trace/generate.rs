use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Instr, Line, Trace, WORDS_PER_LINE};

/// First line number handed out by the generators (byte address 0x10000).
pub const DATA_BASE_LINE: u64 = 0x400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadKind {
    Swap,
    Counter,
    Hashmap,
    Queue,
    ProducerConsumer,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 5] = [
        WorkloadKind::Swap,
        WorkloadKind::Counter,
        WorkloadKind::Hashmap,
        WorkloadKind::Queue,
        WorkloadKind::ProducerConsumer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Swap => "swap",
            WorkloadKind::Counter => "counter",
            WorkloadKind::Hashmap => "hashmap",
            WorkloadKind::Queue => "queue",
            WorkloadKind::ProducerConsumer => "producer_consumer",
        }
    }
}

impl FromStr for WorkloadKind {
    type Err = WorkloadSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| WorkloadSpecError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadSpecError {
    #[error("unknown workload kind `{0}`")]
    UnknownKind(String),
    #[error("unknown workload key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("`{0}` must be at least 1")]
    Zero(&'static str),
    #[error("producer_consumer needs at least 2 threads")]
    TooFewThreads,
}

/// Parameters of a synthetic benchmark. `regions` is per thread; `think`
/// is the number of non-persistent cycles each thread spends between two
/// consecutive regions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub regions: usize,
    pub stores_per_region: usize,
    pub threads: usize,
    pub line_pool: usize,
    pub seed: u64,
    pub think: u32,
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind) -> Self {
        WorkloadSpec {
            kind,
            regions: 16,
            stores_per_region: 4,
            threads: if kind == WorkloadKind::ProducerConsumer {
                2
            } else {
                1
            },
            line_pool: 16,
            seed: 1,
            think: 0,
        }
    }

    pub fn check(&self) -> Result<(), WorkloadSpecError> {
        for (name, v) in [
            ("regions", self.regions),
            ("stores_per_region", self.stores_per_region),
            ("threads", self.threads),
            ("line_pool", self.line_pool),
        ] {
            if v == 0 {
                return Err(WorkloadSpecError::Zero(name));
            }
        }
        if self.kind == WorkloadKind::ProducerConsumer && self.threads < 2 {
            return Err(WorkloadSpecError::TooFewThreads);
        }
        Ok(())
    }

    /// Short label used as the benchmark column in result tables.
    pub fn label(&self) -> String {
        format!(
            "{}-t{}-r{}-s{}-p{}",
            self.kind.name(),
            self.threads,
            self.regions,
            self.stores_per_region,
            self.line_pool
        )
    }
}

impl fmt::Display for WorkloadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kind={},regions={},stores_per_region={},threads={},line_pool={},seed={},think={}",
            self.kind.name(),
            self.regions,
            self.stores_per_region,
            self.threads,
            self.line_pool,
            self.seed,
            self.think
        )
    }
}

impl FromStr for WorkloadSpec {
    type Err = WorkloadSpecError;

    /// Parses `kind=swap,regions=4,...`; unspecified keys keep the defaults
    /// of [`WorkloadSpec::new`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let pairs: Vec<(&str, &str)> = s
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.split_once('=')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| WorkloadSpecError::BadValue {
                        key: p.to_string(),
                        value: String::new(),
                    })
            })
            .collect::<Result<_, _>>()?;
        let kind = pairs
            .iter()
            .find(|(k, _)| *k == "kind")
            .map(|(_, v)| v.parse())
            .transpose()?
            .unwrap_or(WorkloadKind::Swap);
        let mut spec = WorkloadSpec::new(kind);
        for (key, value) in pairs {
            let bad = || WorkloadSpecError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            };
            let num = || value.parse::<u64>().map_err(|_| bad());
            match key {
                "kind" => {}
                "regions" => spec.regions = num()? as usize,
                "stores_per_region" | "stores" => spec.stores_per_region = num()? as usize,
                "threads" => spec.threads = num()? as usize,
                "line_pool" | "lines" => spec.line_pool = num()? as usize,
                "seed" => spec.seed = num()?,
                "think" => spec.think = num()? as u32,
                other => return Err(WorkloadSpecError::UnknownKey(other.to_string())),
            }
        }
        spec.check()?;
        Ok(spec)
    }
}

fn line(idx: usize) -> Line {
    Line(DATA_BASE_LINE + idx as u64)
}

/// Unique, nonzero store value so that every store is observable in a
/// persisted image.
fn token(thread: usize, region: usize, store: usize) -> u64 {
    ((thread as u64 + 1) << 48) | ((region as u64) << 16) | (store as u64 + 1)
}

struct Emitter {
    rng: ChaCha8Rng,
    spec: WorkloadSpec,
}

impl Emitter {
    fn pick_line(&mut self) -> usize {
        self.rng.gen_range(0..self.spec.line_pool)
    }

    /// Skewed toward low indices: the minimum of two uniform draws.
    fn pick_hot(&mut self) -> usize {
        let a = self.pick_line();
        let b = self.pick_line();
        a.min(b)
    }

    fn word(&mut self) -> u8 {
        self.rng.gen_range(0..WORDS_PER_LINE as u8)
    }

    fn body(&mut self, thread: usize, region: usize, queue_tail: &mut usize) -> Vec<Instr> {
        let s = self.spec.stores_per_region;
        let pool = self.spec.line_pool;
        let mut out = Vec::new();
        let st = |out: &mut Vec<Instr>, l: usize, word: u8, i: usize| {
            out.push(Instr::Store {
                line: line(l),
                word,
                value: token(thread, region, i),
            })
        };
        match self.spec.kind {
            WorkloadKind::Swap => {
                let a = self.pick_line();
                let b = if pool > 1 {
                    (a + 1 + self.rng.gen_range(0..pool - 1)) % pool
                } else {
                    a
                };
                let wa = self.word();
                let wb = self.word();
                out.push(Instr::Load {
                    line: line(a),
                    word: wa,
                });
                out.push(Instr::Load {
                    line: line(b),
                    word: wb,
                });
                for i in 0..s {
                    let shift = (i / 2) as u8;
                    if i % 2 == 0 {
                        st(&mut out, a, (wa + shift) % 8, i);
                    } else {
                        st(&mut out, b, (wb + shift) % 8, i);
                    }
                }
            }
            WorkloadKind::Counter => {
                for i in 0..s {
                    let l = self.pick_hot();
                    let w = self.word();
                    out.push(Instr::Load {
                        line: line(l),
                        word: w,
                    });
                    st(&mut out, l, w, i);
                }
            }
            WorkloadKind::Hashmap => {
                // line 0 holds the element count; the rest are buckets
                out.push(Instr::Load {
                    line: line(0),
                    word: 0,
                });
                let buckets = pool.saturating_sub(1).max(1);
                let mut i = 0;
                while i + 1 < s {
                    let b = if pool > 1 {
                        1 + self.rng.gen_range(0..buckets)
                    } else {
                        0
                    };
                    let slot = self.rng.gen_range(0..4u8) * 2;
                    out.push(Instr::Load {
                        line: line(b),
                        word: slot,
                    });
                    st(&mut out, b, slot, i);
                    st(&mut out, b, slot + 1, i + 1);
                    i += 2;
                }
                if i < s {
                    st(&mut out, 0, 0, i);
                }
            }
            WorkloadKind::Queue => {
                // line 0 holds head/tail; the rest form the ring
                out.push(Instr::Load {
                    line: line(0),
                    word: 1,
                });
                let slots = pool.saturating_sub(1).max(1) * WORDS_PER_LINE;
                for i in 0..s.saturating_sub(1) {
                    let pos = *queue_tail % slots;
                    let l = if pool > 1 {
                        1 + pos / WORDS_PER_LINE
                    } else {
                        0
                    };
                    st(&mut out, l, (pos % WORDS_PER_LINE) as u8, i);
                    *queue_tail += 1;
                }
                st(&mut out, 0, 1, s - 1);
            }
            WorkloadKind::ProducerConsumer => {
                let half = (pool / 2).max(1);
                let buf = region % half;
                if thread.is_multiple_of(2) {
                    for i in 0..s {
                        st(&mut out, buf, (i % WORDS_PER_LINE) as u8, i);
                    }
                } else {
                    let outs = pool.saturating_sub(half).max(1);
                    let dst = if pool > half {
                        half + region % outs
                    } else {
                        buf
                    };
                    for i in 0..s.min(WORDS_PER_LINE) {
                        out.push(Instr::Load {
                            line: line(buf),
                            word: i as u8,
                        });
                    }
                    for i in 0..s {
                        st(&mut out, dst, (i % WORDS_PER_LINE) as u8, i);
                    }
                }
            }
        }
        out
    }
}

/// Builds a trace from a workload spec. Deterministic in the spec; output
/// always passes [`validate`](super::validate). With more than one thread,
/// every region runs under lock 0.
pub fn generate(spec: &WorkloadSpec) -> Trace {
    let salt = (spec.kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut em = Emitter {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ salt),
        spec: spec.clone(),
    };
    let locked = spec.threads > 1;
    let mut streams = vec![Vec::new(); spec.threads];
    let mut queue_tail = 0usize;
    for region in 0..spec.regions {
        for (thread, stream) in streams.iter_mut().enumerate() {
            if locked {
                stream.push(Instr::Lock(0));
            }
            stream.push(Instr::Begin);
            let body = em.body(thread, region, &mut queue_tail);
            stream.extend(body);
            stream.push(Instr::End);
            if locked {
                stream.push(Instr::Unlock(0));
            }
            if spec.think > 0 {
                stream.push(Instr::Nop(spec.think));
            }
        }
    }
    Trace::new(streams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::validate;
    use std::collections::BTreeSet;

    #[test]
    fn single_swap_region_shape() {
        let spec = WorkloadSpec {
            regions: 1,
            stores_per_region: 2,
            threads: 1,
            seed: 1,
            ..WorkloadSpec::new(WorkloadKind::Swap)
        };
        let t = generate(&spec);
        assert_eq!(t.total_regions(), 1);
        let regions = t.regions();
        let stores: Vec<_> = regions[0].stores().collect();
        assert_eq!(stores.len(), 2);
        let lines: BTreeSet<_> = stores.iter().map(|s| s.0).collect();
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn producer_consumer_shares_lines() {
        let spec = WorkloadSpec {
            regions: 2,
            threads: 2,
            ..WorkloadSpec::new(WorkloadKind::ProducerConsumer)
        };
        let t = generate(&spec);
        assert_eq!(validate(&t), Ok(()));
        let regions = t.regions();
        let produced: BTreeSet<Line> = regions
            .iter()
            .filter(|r| r.id.thread == 0)
            .flat_map(|r| r.stores().map(|s| s.0).collect::<Vec<_>>())
            .collect();
        let consumed: BTreeSet<Line> = regions
            .iter()
            .filter(|r| r.id.thread == 1)
            .flat_map(|r| {
                r.accesses
                    .iter()
                    .filter_map(|i| match i {
                        Instr::Load { line, .. } => Some(*line),
                        _ => None,
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        assert!(!produced.is_disjoint(&consumed));
    }

    #[test]
    fn same_seed_same_trace() {
        let spec: WorkloadSpec = "kind=counter,regions=8,threads=3,seed=42".parse().unwrap();
        assert_eq!(generate(&spec), generate(&spec));
    }

    #[test]
    fn spec_string_roundtrip() {
        let spec: WorkloadSpec =
            "kind=queue,regions=3,stores_per_region=5,line_pool=4,seed=9,think=20"
                .parse()
                .unwrap();
        assert_eq!(spec.to_string().parse::<WorkloadSpec>().unwrap(), spec);
    }

    #[test]
    fn spec_errors() {
        assert_eq!(
            "kind=producer_consumer,threads=1".parse::<WorkloadSpec>(),
            Err(WorkloadSpecError::TooFewThreads)
        );
        assert_eq!(
            "kind=swap,regions=0".parse::<WorkloadSpec>(),
            Err(WorkloadSpecError::Zero("regions"))
        );
        assert!(matches!(
            "kind=tree".parse::<WorkloadSpec>(),
            Err(WorkloadSpecError::UnknownKind(_))
        ));
        assert!(matches!(
            "kind=swap,depth=3".parse::<WorkloadSpec>(),
            Err(WorkloadSpecError::UnknownKey(_))
        ));
    }
}
