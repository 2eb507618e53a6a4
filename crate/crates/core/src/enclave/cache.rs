//! Bounded cipher-to-plain cache with least-recently-used eviction.
//!
//! Keyed by serialized ciphertext bytes. Recency is tracked with a
//! monotonically increasing use counter and a parallel ordered map, so
//! eviction is O(log n) without unsafe list surgery.

use std::collections::{BTreeMap, HashMap};

pub struct PlainCache {
    capacity: usize,
    entries: HashMap<Vec<u8>, (u64, u64)>, // key -> (value, use_tick)
    recency: BTreeMap<u64, Vec<u8>>,       // use_tick -> key
    tick: u64,
    hits: u64,
    misses: u64,
}

impl PlainCache {
    pub fn new(capacity: usize) -> PlainCache {
        assert!(capacity > 0);
        PlainCache {
            capacity,
            entries: HashMap::new(),
            recency: BTreeMap::new(),
            tick: 0,
            hits: 0,
            misses: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    /// Returns the cached plaintext and refreshes recency.
    pub fn get(&mut self, key: &[u8]) -> Option<u64> {
        self.tick += 1;
        let tick = self.tick;
        match self.entries.get_mut(key) {
            Some((value, use_tick)) => {
                self.recency.remove(use_tick);
                *use_tick = tick;
                self.recency.insert(tick, key.to_vec());
                self.hits += 1;
                Some(*value)
            }
            None => {
                self.misses += 1;
                None
            }
        }
    }

    /// Inserts, evicting the least recently used entry when full.
    /// Returns the evicted key, if any.
    pub fn insert(&mut self, key: Vec<u8>, value: u64) -> Option<Vec<u8>> {
        self.tick += 1;
        if let Some((_, old_tick)) = self.entries.get(&key) {
            self.recency.remove(old_tick);
        }
        let mut evicted = None;
        if !self.entries.contains_key(&key) && self.entries.len() >= self.capacity {
            if let Some((&lru_tick, _)) = self.recency.iter().next() {
                let lru_key = self.recency.remove(&lru_tick).unwrap();
                self.entries.remove(&lru_key);
                evicted = Some(lru_key);
            }
        }
        self.entries.insert(key.clone(), (value, self.tick));
        self.recency.insert(self.tick, key);
        evicted
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.recency.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_eviction_order() {
        let mut c = PlainCache::new(2);
        c.insert(b"a".to_vec(), 1);
        c.insert(b"b".to_vec(), 2);
        // A, B, C, A with capacity 2: C evicts A, A evicts B.
        assert_eq!(c.get(b"a"), Some(1));
        assert_eq!(c.insert(b"c".to_vec(), 3), Some(b"b".to_vec()));
        assert_eq!(c.get(b"b"), None);
        assert_eq!(c.get(b"a"), Some(1));
    }

    #[test]
    fn refresh_on_hit() {
        let mut c = PlainCache::new(2);
        c.insert(b"a".to_vec(), 1);
        c.insert(b"b".to_vec(), 2);
        c.get(b"a");
        // B is now least recent.
        assert_eq!(c.insert(b"c".to_vec(), 3), Some(b"b".to_vec()));
    }

    #[test]
    fn spec_pattern_a_b_c_a() {
        let mut c = PlainCache::new(2);
        assert_eq!(c.get(b"a"), None);
        c.insert(b"a".to_vec(), 1);
        assert_eq!(c.get(b"b"), None);
        c.insert(b"b".to_vec(), 2);
        assert_eq!(c.get(b"c"), None);
        c.insert(b"c".to_vec(), 3); // evicts a
        assert_eq!(c.get(b"a"), None); // second miss for a
        assert_eq!(c.misses(), 4);
    }
}
