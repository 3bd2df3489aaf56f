//! Paragraph embeddings and nearest-neighbour queries.
//!
//! Two kinds of provider produce [`EmbeddingVector`]s: the built-in
//! [`hash_embed`] (signed feature hashing of TF-IDF weighted stems) and an
//! external HTTP encoder service reached through [`ExternalProvider`].

mod cache;
mod external;
mod hashing;
mod neighbors;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, EmbeddingCache};
pub use external::{EmbeddingTransport, ExternalProvider, HttpTransport, EMBED_MEDIA_TYPE};
pub use hashing::{hash_embed, hashing_provider_id, IdfTable, DEFAULT_HASH_DIMENSION};
pub use neighbors::{nearest_neighbors, EmbeddingIndex, DEFAULT_RELATED_K};

use crate::codec::CodecError;
use crate::ingest::ParagraphId;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding service unreachable: {0}")]
    Transport(String),
    #[error("embedding service protocol violation: {0}")]
    Protocol(String),
    #[error("paragraph {0} has no embedding")]
    NotEmbedded(ParagraphId),
    #[error("mixed providers: expected `{expected}`, found `{found}`")]
    ProviderMismatch { expected: String, found: String },
    #[error("dimension must be at least 2, got {0}")]
    Dimension(usize),
    #[error("no texts to embed")]
    EmptyBatch,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EmbedError {
    /// Transport failures may succeed on retry; everything else will not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProviderKind {
    HashingTfidf,
    ExternalService,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingProvider {
    pub id: String,
    pub dimension: usize,
    pub kind: ProviderKind,
}

impl EmbeddingProvider {
    pub fn new(
        id: impl Into<String>,
        dimension: usize,
        kind: ProviderKind,
    ) -> Result<Self, EmbedError> {
        if dimension < 2 {
            return Err(EmbedError::Dimension(dimension));
        }
        Ok(EmbeddingProvider {
            id: id.into(),
            dimension,
            kind,
        })
    }

    pub fn hashing(dimension: usize) -> Result<Self, EmbedError> {
        Self::new(
            hashing_provider_id(dimension),
            dimension,
            ProviderKind::HashingTfidf,
        )
    }
}

/// A dense vector tagged with the provider that produced it. The Euclidean
/// norm is cached at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_id: String,
    norm: f64,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_id: impl Into<String>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        EmbeddingVector {
            values,
            provider_id: provider_id.into(),
            norm,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Same direction with unit norm; the zero vector stays zero.
    pub fn normalized(&self) -> EmbeddingVector {
        if self.norm == 0.0 {
            return self.clone();
        }
        EmbeddingVector::new(
            self.values.iter().map(|v| v / self.norm).collect(),
            self.provider_id.clone(),
        )
    }

    pub fn scaled(&self, factor: f64) -> EmbeddingVector {
        EmbeddingVector::new(
            self.values.iter().map(|v| v * factor).collect(),
            self.provider_id.clone(),
        )
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    dot / (a.norm * b.norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn provider_dimension_floor() {
        assert!(EmbeddingProvider::hashing(1).is_err());
        let p = EmbeddingProvider::hashing(512).unwrap();
        assert_eq!(p.dimension, 512);
        assert_eq!(p.kind, ProviderKind::HashingTfidf);
    }

    #[test]
    fn zero_vector_cosine_is_zero() {
        let z = EmbeddingVector::new(vec![0.0; 3], "p");
        let u = EmbeddingVector::new(vec![1.0, 0.0, 0.0], "p");
        assert_eq!(cosine(&z, &u), 0.0);
        assert_eq!(z.normalized(), z);
    }

    #[test]
    fn retryable_only_for_transport() {
        assert!(EmbedError::Transport("down".into()).is_retryable());
        assert!(!EmbedError::Protocol("bad".into()).is_retryable());
    }

    proptest! {
        #[test]
        fn self_cosine_is_one(v in proptest::collection::vec(-1e3f64..1e3, 2..32)) {
            let u = EmbeddingVector::new(v, "p");
            prop_assume!(u.norm() > 1e-6);
            prop_assert!((cosine(&u, &u) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cached_norm_matches(v in proptest::collection::vec(-10f64..10.0, 0..16)) {
            let u = EmbeddingVector::new(v.clone(), "p");
            let direct = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((u.norm() - direct).abs() <= 1e-12 * direct.max(1.0));
        }
    }
}
