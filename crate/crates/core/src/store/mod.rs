//! Q-value stores: a mixed-radix hash table (exclusive and shared) and a
//! ν-SVR regression model behind one interface.

mod hash;
mod svr_store;

use smallvec::SmallVec;
use thiserror::Error;

use crate::features::FeatureVector;

pub use hash::{HashQTable, SharedHashQTable, TableStats};
pub use svr_store::{SvrStore, SvrStoreConfig};

/// Arbitrary-precision key, little-endian 64-bit limbs.
pub type Key = SmallVec<[u64; 4]>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeyError {
    #[error("component {index} = {value} outside radix {radix}")]
    OutOfRadix { index: usize, value: f64, radix: u64 },
    #[error("vector has {got} components, radices have {expected}")]
    Length { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Inserted,
    Updated,
    /// Collision; the resident entry stayed.
    KeptOld,
    /// Collision; the resident entry was replaced.
    EvictedOld,
    /// Buffered as a regression sample.
    Sampled,
}

/// `φ(w) = Σ w_i Π_{j<i} m_j`.
pub fn mixed_radix_key(values: &[f64], radices: &[u64]) -> Result<Key, KeyError> {
    if values.len() != radices.len() {
        return Err(KeyError::Length { got: values.len(), expected: radices.len() });
    }
    let mut key: Key = SmallVec::new();
    for (i, (&w, &m)) in values.iter().zip(radices).enumerate().rev() {
        if !(w >= 0.0 && w < m as f64 && w.fract() == 0.0) {
            return Err(KeyError::OutOfRadix { index: i, value: w, radix: m });
        }
        mul_add(&mut key, m, w as u64);
    }
    Ok(key)
}

fn mul_add(key: &mut Key, m: u64, add: u64) {
    let mut carry = add as u128;
    for limb in key.iter_mut() {
        let x = *limb as u128 * m as u128 + carry;
        *limb = x as u64;
        carry = x >> 64;
    }
    if carry > 0 {
        key.push(carry as u64);
    }
}

/// `key mod d`.
pub fn hash_index(key: &[u64], capacity: u64) -> u64 {
    assert!(capacity >= 1, "capacity must be positive");
    let d = capacity as u128;
    key.iter().rev().fold(0u128, |rem, &limb| ((rem << 64) | limb as u128) % d) as u64
}

/// Key as a `u128` when it fits (tests and diagnostics).
pub fn key_to_u128(key: &[u64]) -> Option<u128> {
    match key {
        [] => Some(0),
        [a] => Some(*a as u128),
        [a, b] => Some(*a as u128 | (*b as u128) << 64),
        _ => None,
    }
}

/// Largest prime `<= n` (n >= 2).
pub fn largest_prime_at_most(n: u64) -> u64 {
    let is_prime = |k: u64| k >= 2 && (2..).take_while(|d| d * d <= k).all(|d| k % d != 0);
    (2..=n.max(2)).rev().find(|&k| is_prime(k)).unwrap_or(2)
}

/// Storage of action values `Q(x, a)` keyed by feature vectors.
pub trait QValueStore {
    /// Stored value, or the default estimate for unseen pairs.
    fn read(&self, features: &FeatureVector) -> f64;
    /// Stored value only; `None` for unseen pairs.
    fn lookup(&self, features: &FeatureVector) -> Option<f64>;
    /// Number of writes to this pair so far.
    fn visits(&self, features: &FeatureVector) -> u32;
    /// `tag` is the state's current time, used for collision resolution.
    fn write(&mut self, features: &FeatureVector, value: f64, tag: u32) -> WriteOutcome;
    /// Called once after each episode's updates.
    fn end_episode(&mut self, _episode: usize) {}
    /// Drops all stored values.
    fn clear(&mut self);
}

/// Either backend, chosen at run time.
#[derive(Debug)]
pub enum AnyStore {
    Hash(HashQTable),
    Svr(Box<SvrStore>),
}

impl QValueStore for AnyStore {
    fn read(&self, f: &FeatureVector) -> f64 {
        match self {
            AnyStore::Hash(s) => s.read(f),
            AnyStore::Svr(s) => s.read(f),
        }
    }

    fn lookup(&self, f: &FeatureVector) -> Option<f64> {
        match self {
            AnyStore::Hash(s) => s.lookup(f),
            AnyStore::Svr(s) => s.lookup(f),
        }
    }

    fn visits(&self, f: &FeatureVector) -> u32 {
        match self {
            AnyStore::Hash(s) => s.visits(f),
            AnyStore::Svr(s) => s.visits(f),
        }
    }

    fn write(&mut self, f: &FeatureVector, value: f64, tag: u32) -> WriteOutcome {
        match self {
            AnyStore::Hash(s) => s.write(f, value, tag),
            AnyStore::Svr(s) => s.write(f, value, tag),
        }
    }

    fn end_episode(&mut self, episode: usize) {
        match self {
            AnyStore::Hash(s) => s.end_episode(episode),
            AnyStore::Svr(s) => s.end_episode(episode),
        }
    }

    fn clear(&mut self) {
        match self {
            AnyStore::Hash(s) => s.clear(),
            AnyStore::Svr(s) => s.clear(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_examples() {
        assert_eq!(key_to_u128(&mixed_radix_key(&[0.0, 0.0, 0.0], &[2, 3, 4]).unwrap()), Some(0));
        assert_eq!(key_to_u128(&mixed_radix_key(&[1.0, 2.0, 3.0], &[2, 3, 4]).unwrap()), Some(23));
        assert!(mixed_radix_key(&[2.0], &[2]).is_err());
        assert!(mixed_radix_key(&[0.5], &[2]).is_err());
    }

    #[test]
    fn wide_keys_match_u128_arithmetic() {
        let radices = [1u64 << 40, 1 << 40, 1 << 40];
        let w = [5.0, 7.0, 9.0];
        let key = mixed_radix_key(&w, &radices).unwrap();
        assert_eq!(key.len(), 2);
        let expect: u128 = 5 + 7 * (1u128 << 40) + 9 * (1u128 << 80);
        assert_eq!(key_to_u128(&key), Some(expect));
        assert_eq!(hash_index(&key, 1_000_003) as u128, expect % 1_000_003);
    }

    #[test]
    fn index_examples() {
        assert_eq!(hash_index(&[23], 7), 2);
        assert_eq!(hash_index(&[4], 7), 4);
        assert_eq!(hash_index(&[5], 7), hash_index(&[12], 7));
    }

    #[test]
    fn primes() {
        assert_eq!(largest_prime_at_most(10), 7);
        assert_eq!(largest_prime_at_most(13), 13);
        assert_eq!(largest_prime_at_most(10_000_000), 9_999_991);
    }
}
