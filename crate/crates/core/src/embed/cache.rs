use std::collections::BTreeMap;
use std::path::Path;
use std::sync::RwLock;

use super::{EmbedError, EmbeddingVector};
use crate::codec::{Reader, Writer};
use crate::hashing::sha256;

const MAGIC: &[u8; 8] = b"TNEMBC01";
const VERSION: u32 = 1;

/// Provider id plus the SHA-256 of the embedded text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub provider_id: String,
    pub content_hash: [u8; 32],
}

impl CacheKey {
    pub fn new(provider_id: &str, text: &str) -> Self {
        CacheKey {
            provider_id: provider_id.to_owned(),
            content_hash: sha256(text.as_bytes()),
        }
    }
}

/// Thread-safe embedding cache; readers share the lock, inserts take it
/// exclusively.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: RwLock<BTreeMap<CacheKey, Vec<f64>>>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        let entries = self.entries.read().expect("cache lock poisoned");
        entries
            .get(key)
            .map(|v| EmbeddingVector::new(v.clone(), key.provider_id.clone()))
    }

    pub fn insert(&self, key: CacheKey, vector: &EmbeddingVector) {
        let mut entries = self.entries.write().expect("cache lock poisoned");
        entries.insert(key, vector.values().to_vec());
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let entries = self.entries.read().expect("cache lock poisoned");
        let mut w = Writer::new(MAGIC, VERSION);
        w.u64(entries.len() as u64);
        for (key, values) in entries.iter() {
            w.str(&key.provider_id)
                .bytes(&key.content_hash)
                .f64s(values);
        }
        w.finish()
    }

    pub fn from_bytes(what: &str, data: &[u8]) -> Result<Self, EmbedError> {
        let mut r = Reader::open(what, data, MAGIC, VERSION)?;
        let n = r.u64()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let provider_id = r.str()?;
            let content_hash: [u8; 32] = r.bytes(32)?.try_into().expect("32 bytes");
            let values = r.f64s()?;
            entries.insert(
                CacheKey {
                    provider_id,
                    content_hash,
                },
                values,
            );
        }
        r.finish()?;
        Ok(EmbeddingCache {
            entries: RwLock::new(entries),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let data = std::fs::read(path)?;
        Self::from_bytes(&path.display().to_string(), &data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let cache = EmbeddingCache::new();
        let v = EmbeddingVector::new(vec![0.1, -2.0, 3.5e-7], "svc");
        cache.insert(CacheKey::new("svc", "hello"), &v);
        cache.insert(CacheKey::new("other", "hello"), &v);
        let bytes = cache.to_bytes();
        let back = EmbeddingCache::from_bytes("cache", &bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.get(&CacheKey::new("svc", "hello")), Some(v));
        assert_eq!(back.to_bytes(), bytes);
        assert!(back.get(&CacheKey::new("svc", "bye")).is_none());
    }

    #[test]
    fn corrupted_cache_rejected() {
        let cache = EmbeddingCache::new();
        cache.insert(
            CacheKey::new("p", "x"),
            &EmbeddingVector::new(vec![1.0, 2.0], "p"),
        );
        let mut bytes = cache.to_bytes();
        bytes[20] ^= 0xff;
        assert!(matches!(
            EmbeddingCache::from_bytes("cache", &bytes),
            Err(EmbedError::Codec(_))
        ));
    }
}
