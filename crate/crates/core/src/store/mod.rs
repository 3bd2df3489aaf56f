//! On-disk corpus persistence and paragraph queries.
//!
//! A store directory holds numbered generations. Each save writes a complete
//! new generation into a temporary directory, renames it into place and then
//! atomically swaps the `CURRENT` pointer, so readers only ever see a whole
//! generation:
//!
//! ```text
//! store/
//!   CURRENT                    name of the live generation, e.g. gen-000003
//!   LOCK                       writer lock
//!   gen-000003/
//!     manifest.json            format version, sessions, providers, checksums
//!     paragraphs/WHC-35.jsonl  one paragraph per line
//!     labels.csv               paragraph_id,annotator_id,value,stage,timestamp
//!     topics.jsonl             one topic per line
//!     state.json               active-learning state, current model, test split
//!     embeddings/*.bin         one binary file per provider
//!     checkpoints/*.ckpt       binary model checkpoints
//! ```

mod disk;
mod query;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use disk::{
    load_corpus, save_corpus, CorpusManifest, FileEntry, SessionEntry, StoreLock, FORMAT_VERSION,
};
pub use query::{QueryFilter, QueryOrder};

use crate::annotation::{ALState, AnnotationLabel, AnnotationStore};
use crate::classifier::{HeadConfig, Metrics, TensionModelParams};
use crate::embed::{EmbeddingIndex, EmbeddingProvider};
use crate::ingest::{Paragraph, ParagraphId, SessionRef};
use crate::topics::Topic;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("integrity check failed for {record}: {message}")]
    Integrity { record: String, message: String },
    #[error("store format version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("no corpus saved at {0}")]
    Missing(String),
    #[error("store is locked by another writer")]
    Locked,
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Evaluation summary of the model currently used for tension scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub checkpoint_id: String,
    /// Embedding provider the head was trained on.
    pub provider_id: String,
    pub config: HeadConfig,
    pub metrics: Metrics,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusState {
    pub al: Option<ALState>,
    pub current_model: Option<ModelRecord>,
    /// Held-out paragraphs; never offered for active learning.
    pub test_split: Vec<ParagraphId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub paragraphs: Vec<Paragraph>,
    pub embeddings: EmbeddingIndex,
    pub providers: Vec<EmbeddingProvider>,
    pub labels: Vec<AnnotationLabel>,
    pub topics: Vec<Topic>,
    pub checkpoints: BTreeMap<String, TensionModelParams>,
    pub state: CorpusState,
}

impl Corpus {
    /// Sorts paragraphs into storage order: by session, then ordinal, then id.
    pub fn canonicalize(&mut self) {
        self.paragraphs.sort_by(|a, b| {
            a.session
                .cmp(&b.session)
                .then(a.ordinal.cmp(&b.ordinal))
                .then_with(|| a.id.cmp(&b.id))
        });
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    pub fn paragraph(&self, id: &ParagraphId) -> Option<&Paragraph> {
        self.paragraphs.iter().find(|p| &p.id == id)
    }

    pub fn paragraph_index(&self) -> BTreeMap<&ParagraphId, &Paragraph> {
        self.paragraphs.iter().map(|p| (&p.id, p)).collect()
    }

    pub fn sessions(&self) -> Vec<SessionRef> {
        let set: BTreeSet<&SessionRef> = self.paragraphs.iter().map(|p| &p.session).collect();
        set.into_iter().cloned().collect()
    }

    pub fn annotation_store(&self) -> AnnotationStore {
        AnnotationStore::from_parts(
            self.paragraphs.iter().map(|p| p.id.clone()),
            self.labels.clone(),
        )
    }

    pub fn effective_labels(&self) -> BTreeMap<ParagraphId, u8> {
        self.annotation_store().effective_labels()
    }

    /// Adds paragraphs whose ids are not present yet; returns how many were new.
    pub fn merge_paragraphs(&mut self, incoming: Vec<Paragraph>) -> usize {
        let known: BTreeSet<ParagraphId> = self.paragraphs.iter().map(|p| p.id.clone()).collect();
        let before = self.paragraphs.len();
        self.paragraphs
            .extend(incoming.into_iter().filter(|p| !known.contains(&p.id)));
        self.canonicalize();
        self.paragraphs.len() - before
    }

    /// Structural checks run before every save and after every load.
    pub fn validate(&self) -> Result<(), StoreError> {
        let mut ids = BTreeSet::new();
        for p in &self.paragraphs {
            if !ids.insert(&p.id) {
                return Err(StoreError::Invalid(format!(
                    "duplicate paragraph id {}",
                    p.id
                )));
            }
        }
        let providers: BTreeMap<&str, &EmbeddingProvider> =
            self.providers.iter().map(|p| (p.id.as_str(), p)).collect();
        if providers.len() != self.providers.len() {
            return Err(StoreError::Invalid("duplicate provider id".into()));
        }
        for (id, v) in &self.embeddings {
            if !ids.contains(id) {
                return Err(StoreError::Invalid(format!(
                    "embedding for unknown paragraph {id}"
                )));
            }
            match providers.get(v.provider_id()) {
                None => {
                    return Err(StoreError::Invalid(format!(
                        "embedding of {id} uses unregistered provider `{}`",
                        v.provider_id()
                    )))
                }
                Some(p) if p.dimension != v.dimension() => {
                    return Err(StoreError::Invalid(format!(
                        "embedding of {id} has dimension {}, provider says {}",
                        v.dimension(),
                        p.dimension
                    )))
                }
                _ => {}
            }
        }
        for l in &self.labels {
            if !ids.contains(&l.paragraph_id) {
                return Err(StoreError::Invalid(format!(
                    "label for unknown paragraph {}",
                    l.paragraph_id
                )));
            }
        }
        for name in self.checkpoints.keys() {
            if !valid_checkpoint_name(name) {
                return Err(StoreError::Invalid(format!("bad checkpoint name `{name}`")));
            }
        }
        if let Some(m) = &self.state.current_model {
            if !self.checkpoints.contains_key(&m.checkpoint_id) {
                return Err(StoreError::Invalid(format!(
                    "current model {} has no checkpoint",
                    m.checkpoint_id
                )));
            }
        }
        Ok(())
    }

    /// Next unused checkpoint id, `model-0001` onwards.
    pub fn next_checkpoint_id(&self) -> String {
        let n = self
            .checkpoints
            .keys()
            .filter_map(|k| k.strip_prefix("model-")?.parse::<u32>().ok())
            .max()
            .unwrap_or(0);
        format!("model-{:04}", n + 1)
    }

    pub fn current_params(&self) -> Option<&TensionModelParams> {
        let id = &self.state.current_model.as_ref()?.checkpoint_id;
        self.checkpoints.get(id)
    }
}

pub(crate) fn valid_checkpoint_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !name.starts_with('.')
}
