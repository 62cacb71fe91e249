use std::collections::VecDeque;

/// A per-thread log ring. Entries are allocated at the head and reclaimed
/// from the tail once freed; a freed entry behind a live one stays occupied
/// until the tail reaches it.
#[derive(Clone, Debug)]
pub struct LogRing {
    capacity: usize,
    head: u64,
    entries: VecDeque<(u64, bool)>,
}

impl LogRing {
    pub fn new(capacity: usize) -> Self {
        LogRing {
            capacity,
            head: 0,
            entries: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupied(&self) -> usize {
        self.entries.len()
    }

    pub fn has_space(&self) -> bool {
        self.entries.len() < self.capacity
    }

    pub fn head(&self) -> u64 {
        self.head
    }

    pub fn tail(&self) -> u64 {
        self.head - self.entries.len() as u64
    }

    /// Allocates an entry for region `owner` and returns its slot index
    /// (`0..capacity`), or `None` when full.
    pub fn alloc(&mut self, owner: u64) -> Option<usize> {
        if !self.has_space() {
            return None;
        }
        let slot = (self.head % self.capacity as u64) as usize;
        self.head += 1;
        self.entries.push_back((owner, false));
        Some(slot)
    }

    /// Frees every entry of `owner` and advances the tail.
    pub fn free(&mut self, owner: u64) {
        for e in self.entries.iter_mut().filter(|e| e.0 == owner) {
            e.1 = true;
        }
        while self.entries.front().is_some_and(|e| e.1) {
            self.entries.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_and_blocks_when_full() {
        let mut r = LogRing::new(2);
        assert_eq!(r.alloc(0), Some(0));
        assert_eq!(r.alloc(1), Some(1));
        assert_eq!(r.alloc(2), None);
        r.free(1);
        // region 0 still pins the tail
        assert!(!r.has_space());
        r.free(0);
        assert_eq!(r.occupied(), 0);
        assert_eq!(r.alloc(2), Some(0));
        assert_eq!(r.tail(), 2);
        assert_eq!(r.head(), 3);
    }
}
