use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::classifier::{predict_proba, TensionModelParams};
use crate::embed::EmbeddingIndex;
use crate::ingest::ParagraphId;

pub const DEFAULT_AL_BATCH: usize = 20;
pub const DEFAULT_AL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALState {
    /// Also serves as the round token clients echo back.
    pub round: u32,
    pub batch_size: usize,
    pub threshold: f64,
    pub pending_ids: Vec<ParagraphId>,
}

impl Default for ALState {
    fn default() -> Self {
        ALState {
            round: 0,
            batch_size: DEFAULT_AL_BATCH,
            threshold: DEFAULT_AL_THRESHOLD,
            pending_ids: Vec::new(),
        }
    }
}

impl ALState {
    pub fn check_token(&self, token: u32) -> Result<(), AnnotationError> {
        if token != self.round {
            return Err(AnnotationError::StaleRound {
                expected: self.round,
                found: token,
            });
        }
        Ok(())
    }
}

/// The `batch_size` ids closest to `threshold`, ties by ascending id.
pub fn select_uncertain(
    scores: &BTreeMap<ParagraphId, f64>,
    batch_size: usize,
    threshold: f64,
) -> Vec<ParagraphId> {
    let mut ranked: Vec<(f64, &ParagraphId)> = scores
        .iter()
        .map(|(id, &p)| ((p - threshold).abs(), id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    ranked
        .into_iter()
        .take(batch_size)
        .map(|(_, id)| id.clone())
        .collect()
}

/// Merges the answers for the pending batch into `training`, scores every
/// candidate that is still unlabelled with `params`, and picks the next
/// batch. Retraining is left to the caller.
pub fn al_round(
    params: &TensionModelParams,
    candidates: &EmbeddingIndex,
    training: &BTreeMap<ParagraphId, u8>,
    state: &ALState,
    new_labels: &BTreeMap<ParagraphId, u8>,
) -> Result<(BTreeMap<ParagraphId, u8>, ALState), AnnotationError> {
    let pending: BTreeSet<&ParagraphId> = state.pending_ids.iter().collect();
    let answered: BTreeSet<&ParagraphId> = new_labels.keys().collect();
    if pending != answered {
        let missing = pending.difference(&answered).count();
        let extra = answered.difference(&pending).count();
        return Err(AnnotationError::PendingMismatch(format!(
            "{missing} pending ids unanswered, {extra} ids not pending"
        )));
    }
    if let Some(&bad) = new_labels.values().find(|&&v| v > 1) {
        return Err(AnnotationError::Value(bad));
    }
    let mut merged = training.clone();
    merged.extend(new_labels.iter().map(|(k, &v)| (k.clone(), v)));
    let mut scores = BTreeMap::new();
    for (id, v) in candidates {
        if !merged.contains_key(id) {
            scores.insert(id.clone(), predict_proba(params, v)?);
        }
    }
    let next = ALState {
        round: state.round + 1,
        batch_size: state.batch_size,
        threshold: state.threshold,
        pending_ids: select_uncertain(&scores, state.batch_size, state.threshold),
    };
    Ok((merged, next))
}
