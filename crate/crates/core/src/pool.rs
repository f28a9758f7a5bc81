//! The n-gram pool: cached trajectory n-grams keyed by their leading token.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::token::{NGram, Token};

/// Associative store of distinct n-grams with recency ordering.
///
/// Every insert (including a re-insert of an existing n-gram) stamps the
/// entry with a fresh value of a monotone counter. Lookups return the most
/// recently stamped suffixes first. With a capacity set, the globally
/// least recently stamped entry is evicted on overflow.
#[derive(Debug, Clone)]
pub struct NGramPool {
    n: usize,
    capacity: Option<usize>,
    counter: u64,
    buckets: HashMap<Token, BTreeMap<u64, Vec<Token>>>,
    stamps: HashMap<NGram, u64>,
    recency: BTreeMap<u64, NGram>,
}

impl NGramPool {
    /// An unbounded pool of `n`-grams.
    pub fn new(n: usize) -> Self {
        Self::with_capacity(n, None)
    }

    pub fn with_capacity(n: usize, capacity: Option<usize>) -> Self {
        assert!(n >= 2, "n-gram size must be at least 2");
        Self {
            n,
            capacity,
            counter: 0,
            buckets: HashMap::new(),
            stamps: HashMap::new(),
            recency: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    pub fn contains(&self, gram: &NGram) -> bool {
        self.stamps.contains_key(gram)
    }

    /// Inserts `gram`, refreshing its recency if already present.
    pub fn insert(&mut self, gram: NGram) -> Result<()> {
        if gram.len() != self.n {
            return Err(Error::InvalidNGram {
                expected: self.n,
                got: gram.len(),
            });
        }
        let leading = gram.leading();
        if let Some(old) = self.stamps.get(&gram).copied() {
            self.recency.remove(&old);
            if let Some(bucket) = self.buckets.get_mut(&leading) {
                bucket.remove(&old);
            }
        }
        self.counter += 1;
        let stamp = self.counter;
        self.buckets
            .entry(leading)
            .or_default()
            .insert(stamp, gram.suffix().to_vec());
        self.stamps.insert(gram.clone(), stamp);
        self.recency.insert(stamp, gram);

        if let Some(cap) = self.capacity {
            while self.stamps.len() > cap {
                self.evict_oldest();
            }
        }
        Ok(())
    }

    /// Inserts a raw token slice of length `n`.
    pub fn insert_tokens(&mut self, tokens: &[Token]) -> Result<()> {
        self.insert(NGram::new(tokens.to_vec(), self.n)?)
    }

    fn evict_oldest(&mut self) {
        if let Some((stamp, gram)) = self.recency.pop_first() {
            self.stamps.remove(&gram);
            let leading = gram.leading();
            if let Some(bucket) = self.buckets.get_mut(&leading) {
                bucket.remove(&stamp);
                if bucket.is_empty() {
                    self.buckets.remove(&leading);
                }
            }
        }
    }

    /// Up to `limit` suffixes of n-grams starting with `last_token`,
    /// most recently inserted first.
    pub fn lookup(&self, last_token: Token, limit: usize) -> Vec<Vec<Token>> {
        match self.buckets.get(&last_token) {
            Some(bucket) => bucket.values().rev().take(limit).cloned().collect(),
            None => Vec::new(),
        }
    }

    /// Inserts every contiguous `n`-token window of `prompt`, left to right.
    /// Prompts shorter than `n` leave the pool unchanged.
    pub fn seed_from_prompt(&mut self, prompt: &[Token]) {
        for window in prompt.windows(self.n) {
            self.insert_tokens(window)
                .expect("window length equals the pool's n");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gram(t: &[Token]) -> NGram {
        NGram::new(t.to_vec(), t.len()).unwrap()
    }

    #[test]
    fn duplicate_insert_keeps_one_entry() {
        let mut pool = NGramPool::new(4);
        pool.insert(gram(&[5, 7, 7, 9])).unwrap();
        pool.insert(gram(&[5, 7, 7, 9])).unwrap();
        assert_eq!(pool.len(), 1);
        assert_eq!(pool.lookup(5, usize::MAX), vec![vec![7, 7, 9]]);
    }

    #[test]
    fn wrong_length_rejected() {
        let mut pool = NGramPool::new(3);
        assert_eq!(
            pool.insert(gram(&[1, 2, 3, 4])),
            Err(Error::InvalidNGram {
                expected: 3,
                got: 4
            })
        );
        assert!(pool.is_empty());
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut pool = NGramPool::with_capacity(3, Some(2));
        pool.insert(gram(&[1, 2, 3])).unwrap();
        pool.insert(gram(&[4, 5, 6])).unwrap();
        pool.insert(gram(&[7, 8, 9])).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(!pool.contains(&gram(&[1, 2, 3])));
        assert!(pool.contains(&gram(&[4, 5, 6])));
        assert!(pool.contains(&gram(&[7, 8, 9])));
    }

    #[test]
    fn refresh_protects_from_eviction() {
        let mut pool = NGramPool::with_capacity(3, Some(2));
        pool.insert(gram(&[1, 2, 3])).unwrap();
        pool.insert(gram(&[4, 5, 6])).unwrap();
        pool.insert(gram(&[1, 2, 3])).unwrap();
        pool.insert(gram(&[7, 8, 9])).unwrap();
        assert!(pool.contains(&gram(&[1, 2, 3])));
        assert!(!pool.contains(&gram(&[4, 5, 6])));
    }

    #[test]
    fn lookup_most_recent_first() {
        let mut pool = NGramPool::new(3);
        assert!(pool.lookup(3, 4).is_empty());
        pool.insert(gram(&[3, 4, 5])).unwrap();
        pool.insert(gram(&[3, 4, 6])).unwrap();
        assert_eq!(pool.lookup(3, 1), vec![vec![4, 6]]);
        assert_eq!(pool.lookup(3, 0), Vec::<Vec<Token>>::new());
        assert!(pool.lookup(9, 4).is_empty());
    }

    #[test]
    fn prompt_seeding() {
        let mut pool = NGramPool::new(3);
        pool.seed_from_prompt(&[1, 2, 3, 4]);
        assert_eq!(pool.len(), 2);
        assert!(pool.contains(&gram(&[1, 2, 3])));
        assert!(pool.contains(&gram(&[2, 3, 4])));

        let mut short = NGramPool::new(3);
        short.seed_from_prompt(&[1, 2]);
        assert!(short.is_empty());

        let mut rep = NGramPool::new(3);
        rep.seed_from_prompt(&[7, 7, 7, 7, 7]);
        assert_eq!(rep.len(), 1);
    }

    proptest! {
        #[test]
        fn lookup_matches_replayed_recency(
            inserts in proptest::collection::vec(proptest::collection::vec(0u32..4, 3), 1..60),
            cap in proptest::option::of(1usize..20),
        ) {
            let mut pool = NGramPool::with_capacity(3, cap);
            let mut log: Vec<Vec<Token>> = Vec::new();
            for g in &inserts {
                pool.insert_tokens(g).unwrap();
                log.retain(|x| x != g);
                log.push(g.clone());
                if let Some(c) = cap {
                    while log.len() > c {
                        log.remove(0);
                    }
                }
                // round trip
                prop_assert!(pool.lookup(g[0], usize::MAX).contains(&g[1..].to_vec()));
            }
            prop_assert_eq!(pool.len(), log.len());
            for lead in 0u32..4 {
                let expected: Vec<Vec<Token>> = log
                    .iter()
                    .rev()
                    .filter(|g| g[0] == lead)
                    .map(|g| g[1..].to_vec())
                    .collect();
                prop_assert_eq!(pool.lookup(lead, usize::MAX), expected);
            }
        }
    }
}
