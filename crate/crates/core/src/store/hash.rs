use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use super::{hash_index, largest_prime_at_most, mixed_radix_key, Key, QValueStore, WriteOutcome};
use crate::features::FeatureVector;

/// Default slot budget.
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
struct Slot {
    key: Key,
    value: f64,
    tag: u32,
    visits: u32,
}

/// Counters exported with experiment results.
#[derive(Debug, Default)]
pub struct TableStats {
    pub hits: AtomicU64,
    pub misses: AtomicU64,
    pub inserts: AtomicU64,
    pub updates: AtomicU64,
    pub collisions: AtomicU64,
    pub evictions: AtomicU64,
}

impl TableStats {
    fn bump(counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(counter: &AtomicU64) -> u64 {
        counter.load(Ordering::Relaxed)
    }

    fn reset(&self) {
        for c in [&self.hits, &self.misses, &self.inserts, &self.updates, &self.collisions, &self.evictions] {
            c.store(0, Ordering::Relaxed);
        }
    }
}

fn key_of(radices: &[u64], features: &FeatureVector) -> Key {
    mixed_radix_key(&features.values, radices).expect("feature vector outside the schema radices")
}

fn write_slot(slot: Option<&mut Slot>, key: Key, value: f64, tag: u32, stats: &TableStats) -> (WriteOutcome, Option<Slot>) {
    match slot {
        None => {
            TableStats::bump(&stats.inserts);
            (WriteOutcome::Inserted, Some(Slot { key, value, tag, visits: 1 }))
        }
        Some(s) if s.key == key => {
            TableStats::bump(&stats.updates);
            s.value = value;
            s.tag = s.tag.min(tag);
            s.visits = s.visits.saturating_add(1);
            (WriteOutcome::Updated, None)
        }
        Some(s) => {
            TableStats::bump(&stats.collisions);
            if tag < s.tag {
                TableStats::bump(&stats.evictions);
                *s = Slot { key, value, tag, visits: 1 };
                (WriteOutcome::EvictedOld, None)
            } else {
                (WriteOutcome::KeptOld, None)
            }
        }
    }
}

/// Hash table with one entry per slot, slot = key mod `capacity` (a prime).
///
/// Slots are materialized on first write, so memory follows the number of
/// stored entries rather than the capacity.
#[derive(Debug)]
pub struct HashQTable {
    capacity: u64,
    radices: Vec<u64>,
    q0: f64,
    slots: HashMap<u64, Slot>,
    stats: TableStats,
}

impl HashQTable {
    /// Capacity is the largest prime not above `budget`.
    pub fn new(radices: Vec<u64>, budget: u64) -> Self {
        Self::with_capacity_exact(radices, largest_prime_at_most(budget))
    }

    pub fn with_default_budget(radices: Vec<u64>) -> Self {
        Self::new(radices, DEFAULT_BUDGET)
    }

    /// Uses `capacity` as given (tests with tiny tables).
    pub fn with_capacity_exact(radices: Vec<u64>, capacity: u64) -> Self {
        Self { capacity: capacity.max(1), radices, q0: 0.0, slots: HashMap::new(), stats: TableStats::default() }
    }

    pub fn initial_value(mut self, q0: f64) -> Self {
        self.q0 = q0;
        self
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn radices(&self) -> &[u64] {
        &self.radices
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn load_factor(&self) -> f64 {
        self.slots.len() as f64 / self.capacity as f64
    }

    pub fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn find(&self, features: &FeatureVector) -> Option<&Slot> {
        let key = key_of(&self.radices, features);
        let slot = self.slots.get(&hash_index(&key, self.capacity))?;
        (slot.key == key).then_some(slot)
    }

    /// Time tag of the entry stored for `features`.
    pub fn tag(&self, features: &FeatureVector) -> Option<u32> {
        self.find(features).map(|s| s.tag)
    }
}

impl QValueStore for HashQTable {
    fn read(&self, features: &FeatureVector) -> f64 {
        self.lookup(features).unwrap_or(self.q0)
    }

    fn lookup(&self, features: &FeatureVector) -> Option<f64> {
        let v = self.find(features).map(|s| s.value);
        TableStats::bump(if v.is_some() { &self.stats.hits } else { &self.stats.misses });
        v
    }

    fn visits(&self, features: &FeatureVector) -> u32 {
        self.find(features).map_or(0, |s| s.visits)
    }

    fn write(&mut self, features: &FeatureVector, value: f64, tag: u32) -> WriteOutcome {
        let key = key_of(&self.radices, features);
        let idx = hash_index(&key, self.capacity);
        let (outcome, new) = write_slot(self.slots.get_mut(&idx), key, value, tag, &self.stats);
        if let Some(s) = new {
            self.slots.insert(idx, s);
        }
        outcome
    }

    fn clear(&mut self) {
        self.slots.clear();
        self.stats.reset();
    }
}

const SHARDS: usize = 64;

/// Thread-safe variant for shared-memory sampling. Each slot is guarded by
/// its shard's lock, so single-slot reads and writes are atomic; concurrent
/// read-modify-write sequences may lose updates.
#[derive(Debug)]
pub struct SharedHashQTable {
    capacity: u64,
    radices: Vec<u64>,
    q0: f64,
    shards: Vec<Mutex<HashMap<u64, Slot>>>,
    stats: TableStats,
}

impl SharedHashQTable {
    pub fn new(radices: Vec<u64>, budget: u64) -> Self {
        Self {
            capacity: largest_prime_at_most(budget),
            radices,
            q0: 0.0,
            shards: (0..SHARDS).map(|_| Mutex::new(HashMap::new())).collect(),
            stats: TableStats::default(),
        }
    }

    pub fn with_default_budget(radices: Vec<u64>) -> Self {
        Self::new(radices, DEFAULT_BUDGET)
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.lock().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn locate(&self, features: &FeatureVector) -> (Key, u64, usize) {
        let key = key_of(&self.radices, features);
        let idx = hash_index(&key, self.capacity);
        (key, idx, (idx % SHARDS as u64) as usize)
    }

    fn with_slot<T>(&self, features: &FeatureVector, f: impl FnOnce(Option<&Slot>) -> T) -> T {
        let (key, idx, shard) = self.locate(features);
        let guard = self.shards[shard].lock();
        f(guard.get(&idx).filter(|s| s.key == key))
    }

    /// Copies the contents into an exclusive table.
    pub fn snapshot(&self) -> HashQTable {
        let mut t = HashQTable::with_capacity_exact(self.radices.clone(), self.capacity).initial_value(self.q0);
        for shard in &self.shards {
            for (&i, s) in shard.lock().iter() {
                t.slots.insert(i, s.clone());
            }
        }
        t
    }
}

impl QValueStore for &SharedHashQTable {
    fn read(&self, features: &FeatureVector) -> f64 {
        self.lookup(features).unwrap_or(self.q0)
    }

    fn lookup(&self, features: &FeatureVector) -> Option<f64> {
        let v = self.with_slot(features, |s| s.map(|s| s.value));
        TableStats::bump(if v.is_some() { &self.stats.hits } else { &self.stats.misses });
        v
    }

    fn visits(&self, features: &FeatureVector) -> u32 {
        self.with_slot(features, |s| s.map_or(0, |s| s.visits))
    }

    fn write(&mut self, features: &FeatureVector, value: f64, tag: u32) -> WriteOutcome {
        let (key, idx, shard) = self.locate(features);
        let mut guard = self.shards[shard].lock();
        let (outcome, new) = write_slot(guard.get_mut(&idx), key, value, tag, &self.stats);
        if let Some(s) = new {
            guard.insert(idx, s);
        }
        outcome
    }

    fn clear(&mut self) {
        for s in &self.shards {
            s.lock().clear();
        }
        self.stats.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector { values: v.to_vec() }
    }

    #[test]
    fn read_write_and_collisions() {
        // keys 5 and 12 share slot 5 when d = 7
        let mut t = HashQTable::with_capacity_exact(vec![20], 7);
        assert_eq!(t.read(&fv(&[5.0])), 0.0);
        assert_eq!(t.write(&fv(&[5.0]), 1.5, 3), WriteOutcome::Inserted);
        assert_eq!(t.write(&fv(&[5.0]), 2.5, 3), WriteOutcome::Updated);
        assert_eq!(t.read(&fv(&[5.0])), 2.5);
        assert_eq!(t.visits(&fv(&[5.0])), 2);
        assert_eq!(t.write(&fv(&[12.0]), 9.0, 5), WriteOutcome::KeptOld);
        assert_eq!(t.read(&fv(&[12.0])), 0.0);
        assert_eq!(t.write(&fv(&[12.0]), 9.0, 3), WriteOutcome::KeptOld);
        assert_eq!(t.write(&fv(&[12.0]), 9.0, 1), WriteOutcome::EvictedOld);
        assert_eq!(t.read(&fv(&[12.0])), 9.0);
        assert_eq!(t.lookup(&fv(&[5.0])), None);
        assert_eq!(TableStats::get(&t.stats().collisions), 3);
        assert_eq!(TableStats::get(&t.stats().evictions), 1);
    }

    #[test]
    fn shared_table_agrees_with_exclusive() {
        let shared = SharedHashQTable::new(vec![10, 10], 101);
        let mut handle = &shared;
        let mut excl = HashQTable::new(vec![10, 10], 101);
        for i in 0..100 {
            let v = fv(&[(i % 10) as f64, (i / 10) as f64]);
            assert_eq!(handle.write(&v, i as f64, i), excl.write(&v, i as f64, i));
        }
        for i in 0..100 {
            let v = fv(&[(i % 10) as f64, (i / 10) as f64]);
            assert_eq!(handle.read(&v), excl.read(&v));
        }
        assert_eq!(shared.snapshot().len(), excl.len());
    }
}
