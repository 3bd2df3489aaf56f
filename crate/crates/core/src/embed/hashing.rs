use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;
use crate::hashing::{hash64, FEATURE_HASH_SEED};
use crate::preprocess::StemBag;

pub const DEFAULT_HASH_DIMENSION: usize = 512;

pub fn hashing_provider_id(dimension: usize) -> String {
    format!("hashing-tfidf-{dimension}")
}

/// Document frequencies over a corpus of stem bags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdfTable {
    pub documents: u64,
    pub document_frequency: BTreeMap<String, u64>,
}

impl IdfTable {
    pub fn from_bags<'a>(bags: impl IntoIterator<Item = &'a StemBag>) -> Self {
        let mut table = IdfTable::default();
        for bag in bags {
            table.documents += 1;
            for (stem, _) in bag.iter() {
                *table.document_frequency.entry(stem.to_owned()).or_insert(0) += 1;
            }
        }
        table
    }

    /// Smoothed idf: ln((1 + N) / (1 + df)) + 1. Unseen stems get df = 0.
    pub fn idf(&self, stem: &str) -> f64 {
        let df = self.document_frequency.get(stem).copied().unwrap_or(0);
        ((1.0 + self.documents as f64) / (1.0 + df as f64)).ln() + 1.0
    }
}

/// Signed feature hashing: each stem lands in bucket `h mod D` with sign
/// taken from the top bit of the same hash and adds `sign * tf * idf`. The
/// result is L2-normalized unless it is zero.
pub fn hash_embed(bag: &StemBag, dimension: usize, idf: &IdfTable) -> EmbeddingVector {
    assert!(dimension >= 2, "hash dimension must be at least 2");
    let mut values = vec![0.0; dimension];
    for (stem, count) in bag.iter() {
        let h = hash64(FEATURE_HASH_SEED, stem.as_bytes());
        let index = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[index] += sign * f64::from(count) * idf.idf(stem);
    }
    EmbeddingVector::new(values, hashing_provider_id(dimension)).normalized()
}
