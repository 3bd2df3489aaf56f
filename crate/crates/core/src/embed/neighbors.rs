use std::collections::BTreeMap;

use super::{cosine, EmbedError, EmbeddingVector};
use crate::ingest::ParagraphId;

pub const DEFAULT_RELATED_K: usize = 10;

pub type EmbeddingIndex = BTreeMap<ParagraphId, EmbeddingVector>;

/// Exhaustive cosine k-NN over `pool`, excluding the query. Sorted by
/// similarity descending, then paragraph id ascending.
pub fn nearest_neighbors(
    query_id: &ParagraphId,
    k: usize,
    pool: &EmbeddingIndex,
) -> Result<Vec<(ParagraphId, f64)>, EmbedError> {
    let query = pool
        .get(query_id)
        .ok_or_else(|| EmbedError::NotEmbedded(query_id.clone()))?;
    let mut scored = Vec::with_capacity(pool.len());
    for (id, v) in pool {
        if id == query_id {
            continue;
        }
        if v.provider_id() != query.provider_id() {
            return Err(EmbedError::ProviderMismatch {
                expected: query.provider_id().to_owned(),
                found: v.provider_id().to_owned(),
            });
        }
        scored.push((id.clone(), cosine(query, v)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
