use std::collections::{BTreeMap, HashMap};

use crate::trace::{Line, Words};

#[derive(Clone, Debug)]
struct Resident {
    dirty: bool,
    words: Words,
    stamp: u64,
}

/// Result of one cache access. `evicted` is only set when the victim was
/// dirty; clean victims vanish silently.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheAccess {
    pub hit: bool,
    pub evicted: Option<(Line, Words)>,
}

/// Single-level, fully associative, write-back LRU cache.
#[derive(Clone, Debug)]
pub struct Cache {
    capacity: usize,
    lines: HashMap<Line, Resident>,
    lru: BTreeMap<u64, Line>,
    clock: u64,
}

impl Cache {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cache needs at least one line");
        Cache {
            capacity,
            lines: HashMap::new(),
            lru: BTreeMap::new(),
            clock: 0,
        }
    }

    /// Touches `line`, making it most recently used. A store sets the dirty
    /// flag; `words`, when given, replaces the cached contents (the fill
    /// value on a miss, the post-store value on a store).
    pub fn access(&mut self, line: Line, is_store: bool, words: Option<Words>) -> CacheAccess {
        self.clock += 1;
        let stamp = self.clock;
        if let Some(entry) = self.lines.get_mut(&line) {
            self.lru.remove(&entry.stamp);
            entry.stamp = stamp;
            entry.dirty |= is_store;
            if let Some(w) = words {
                entry.words = w;
            }
            self.lru.insert(stamp, line);
            return CacheAccess {
                hit: true,
                evicted: None,
            };
        }

        let mut evicted = None;
        if self.lines.len() >= self.capacity {
            let (&old_stamp, &victim) = self.lru.iter().next().expect("non-empty cache");
            self.lru.remove(&old_stamp);
            let entry = self.lines.remove(&victim).expect("lru entry is resident");
            if entry.dirty {
                evicted = Some((victim, entry.words));
            }
        }
        self.lines.insert(
            line,
            Resident {
                dirty: is_store,
                words: words.unwrap_or_default(),
                stamp,
            },
        );
        self.lru.insert(stamp, line);
        CacheAccess {
            hit: false,
            evicted,
        }
    }

    pub fn is_resident(&self, line: Line) -> bool {
        self.lines.contains_key(&line)
    }

    pub fn is_dirty(&self, line: Line) -> bool {
        self.lines.get(&line).is_some_and(|e| e.dirty)
    }

    pub fn words(&self, line: Line) -> Option<Words> {
        self.lines.get(&line).map(|e| e.words)
    }

    /// Clears the dirty flag once the line's contents have been handed to a
    /// persist operation.
    pub fn clean(&mut self, line: Line) {
        if let Some(e) = self.lines.get_mut(&line) {
            e.dirty = false;
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}
