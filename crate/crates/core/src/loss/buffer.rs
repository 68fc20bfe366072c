use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;

use crate::lp::ActiveSetSignature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    DayAhead,
    RealTimeFirst,
    RealTime,
}

/// A cached derivative is looked up by problem family, zero-based hour and
/// active set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BufferKey {
    pub family: Family,
    pub hour: usize,
    pub signature: ActiveSetSignature,
}

#[derive(Debug)]
struct Entry {
    matrix: Arc<DMatrix<f64>>,
    last_used: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BufferStats {
    pub hits: usize,
    pub misses: usize,
    pub entries: usize,
}

impl BufferStats {
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Derivative matrices of local solution maps keyed by active set.
///
/// Reads take a shared lock. Concurrent misses on the same key may both
/// compute; the first insert wins and both values are identical.
#[derive(Debug, Default)]
pub struct PolicyBuffer {
    capacity: Option<usize>,
    entries: RwLock<HashMap<BufferKey, Entry>>,
    clock: AtomicU64,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl PolicyBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evicts the least recently used entry beyond `capacity`.
    pub fn with_capacity(capacity: usize) -> Self {
        PolicyBuffer {
            capacity: Some(capacity.max(1)),
            ..Self::default()
        }
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed)
    }

    /// Looks up `key` and counts a hit or a miss.
    pub fn get(&self, key: &BufferKey) -> Option<Arc<DMatrix<f64>>> {
        let map = self.entries.read().expect("buffer lock");
        match map.get(key) {
            Some(e) => {
                e.last_used.store(self.tick(), Ordering::Relaxed);
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(Arc::clone(&e.matrix))
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Inserts unless present and returns the stored matrix.
    pub fn insert(&self, key: BufferKey, matrix: DMatrix<f64>) -> Arc<DMatrix<f64>> {
        let mut map = self.entries.write().expect("buffer lock");
        if let Some(e) = map.get(&key) {
            return Arc::clone(&e.matrix);
        }
        if let Some(cap) = self.capacity {
            while map.len() >= cap {
                let oldest = map
                    .iter()
                    .min_by_key(|(_, e)| e.last_used.load(Ordering::Relaxed))
                    .map(|(k, _)| k.clone());
                match oldest {
                    Some(k) => map.remove(&k),
                    None => break,
                };
            }
        }
        let matrix = Arc::new(matrix);
        map.insert(
            key,
            Entry {
                matrix: Arc::clone(&matrix),
                last_used: AtomicU64::new(self.tick()),
            },
        );
        matrix
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("buffer lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> BufferStats {
        BufferStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: self.len(),
        }
    }

    pub fn reset_stats(&self) {
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
    }

    /// Drops every entry.
    pub fn purge(&self) {
        self.entries.write().expect("buffer lock").clear();
    }
}
