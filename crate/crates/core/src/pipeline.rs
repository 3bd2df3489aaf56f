//! Corpus-level steps shared by the command line and the HTTP service.
//!
//! Training works on a snapshot ([`fit_model`]) so it can run off the
//! request path; the result is then folded into the live corpus with
//! [`install_model`], which also rescores every paragraph.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::annotation::{al_round, select_uncertain, ALState, AnnotationError};
use crate::classifier::{
    dataset_from_index, evaluate, predict_proba, split_dataset, train, ClassifierError,
    EpochRecord, HeadConfig, TensionModelParams, UndersampleStrategy,
};
use crate::embed::{
    hash_embed, EmbedError, EmbeddingIndex, EmbeddingProvider, EmbeddingVector, IdfTable,
};
use crate::ingest::ParagraphId;
use crate::preprocess::{preprocess_for_topics, StemBag, TokenFilterConfig};
use crate::store::{Corpus, ModelRecord};
use crate::topics::{build_topics, TopicsError};

/// Share of labelled paragraphs held out for evaluation (an 8:2 split).
pub const DEFAULT_TEST_RATIO: f64 = 0.2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the corpus has no embeddings; run `embed` first")]
    NoEmbeddings,
    #[error("no labelled paragraphs are embedded by `{0}`")]
    NoTrainingData(String),
    #[error("no model has been trained yet")]
    NoModel,
    #[error("the current model's provider `{0}` is not registered")]
    UnknownProvider(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Topics(#[from] TopicsError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// The provider embedding the most paragraphs; the earliest registered wins ties.
pub fn active_provider(corpus: &Corpus) -> Option<&EmbeddingProvider> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in corpus.embeddings.values() {
        *counts.entry(v.provider_id()).or_insert(0) += 1;
    }
    let mut best: Option<(&EmbeddingProvider, usize)> = None;
    for p in &corpus.providers {
        let n = counts.get(p.id.as_str()).copied().unwrap_or(0);
        if n > 0 && best.is_none_or(|(_, m)| n > m) {
            best = Some((p, n));
        }
    }
    best.map(|(p, _)| p)
}

pub fn provider_index(corpus: &Corpus, provider_id: &str) -> EmbeddingIndex {
    corpus
        .embeddings
        .iter()
        .filter(|(_, v)| v.provider_id() == provider_id)
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

/// Topic-preprocessed stem bags of every paragraph's clean text.
pub fn stem_bags(corpus: &Corpus, config: &TokenFilterConfig) -> BTreeMap<ParagraphId, StemBag> {
    corpus
        .paragraphs
        .iter()
        .map(|p| (p.id.clone(), preprocess_for_topics(&p.clean_text, config)))
        .collect()
}

/// Hashing-provider vectors for every paragraph, with document frequencies
/// taken over the whole corpus.
pub fn hashing_vectors(
    corpus: &Corpus,
    dimension: usize,
) -> Result<(EmbeddingProvider, EmbeddingIndex), PipelineError> {
    let provider = EmbeddingProvider::hashing(dimension)?;
    let bags = stem_bags(corpus, &TokenFilterConfig::default());
    let idf = IdfTable::from_bags(bags.values());
    let index = bags
        .iter()
        .map(|(id, bag)| (id.clone(), hash_embed(bag, dimension, &idf)))
        .collect();
    Ok((provider, index))
}

/// Replaces the embeddings of the paragraphs in `vectors` and registers
/// `provider`. Providers left without vectors are dropped, and scores are
/// recomputed when a model exists. Returns the number of vectors stored.
pub fn install_embeddings(
    corpus: &mut Corpus,
    provider: EmbeddingProvider,
    vectors: impl IntoIterator<Item = (ParagraphId, EmbeddingVector)>,
) -> Result<usize, PipelineError> {
    let mut n = 0;
    for (id, v) in vectors {
        if v.provider_id() != provider.id {
            return Err(EmbedError::ProviderMismatch {
                expected: provider.id.clone(),
                found: v.provider_id().to_owned(),
            }
            .into());
        }
        if v.dimension() != provider.dimension {
            return Err(EmbedError::Dimension(v.dimension()).into());
        }
        corpus.embeddings.insert(id, v);
        n += 1;
    }
    if !corpus.providers.iter().any(|p| p.id == provider.id) {
        corpus.providers.push(provider);
    }
    let used: BTreeSet<&str> = corpus
        .embeddings
        .values()
        .map(|v| v.provider_id())
        .collect();
    corpus.providers.retain(|p| used.contains(p.id.as_str()));
    if corpus.state.current_model.is_some() {
        score_corpus(corpus)?;
    }
    Ok(n)
}

/// Clusters the active provider's vectors into `k` topics and tags each
/// paragraph with its topic. Replaces any earlier topics.
pub fn assign_topics(
    corpus: &mut Corpus,
    k: usize,
    top_n: usize,
    seed: u64,
) -> Result<usize, PipelineError> {
    let provider = active_provider(corpus)
        .ok_or(PipelineError::NoEmbeddings)?
        .id
        .clone();
    let index = provider_index(corpus, &provider);
    let mut bags = stem_bags(corpus, &TokenFilterConfig::default());
    let items: Vec<_> = index
        .into_iter()
        .filter_map(|(id, v)| bags.remove(&id).map(|bag| (id, bag, v)))
        .collect();
    let topics = build_topics(&items, k, top_n, seed)?;
    let mut membership = BTreeMap::new();
    for t in &topics {
        for id in &t.member_ids {
            membership.insert(id.clone(), t.id);
        }
    }
    for p in &mut corpus.paragraphs {
        p.topic_id = membership.get(&p.id).copied();
    }
    corpus.topics = topics;
    Ok(corpus.topics.len())
}

/// Fixes the held-out set the first time labelled data is available. Later
/// labels always go to training. Returns the size of the test split.
pub fn ensure_test_split(
    corpus: &mut Corpus,
    ratio: f64,
    seed: u64,
) -> Result<usize, PipelineError> {
    if !corpus.state.test_split.is_empty() {
        return Ok(corpus.state.test_split.len());
    }
    let provider = active_provider(corpus)
        .ok_or(PipelineError::NoEmbeddings)?
        .id
        .clone();
    let index = provider_index(corpus, &provider);
    let labels = corpus.effective_labels();
    let ds = dataset_from_index(labels.keys(), &index, &labels, &corpus.paragraph_index())?;
    if ds.len() < 2 {
        return Ok(0);
    }
    let stratified = ds.positives() > 0 && ds.positives() < ds.len();
    let (_, test) = split_dataset(&ds, 1.0 - ratio, seed, stratified)?;
    corpus.state.test_split = test
        .items()
        .iter()
        .filter_map(|i| i.meta.paragraph_id.clone())
        .collect();
    Ok(corpus.state.test_split.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub params: TensionModelParams,
    pub record: ModelRecord,
    pub history: Vec<EpochRecord>,
}

/// Trains a head on every labelled, embedded paragraph outside the test
/// split and evaluates it on the test split. `config.input_dim` is taken
/// from the active provider.
pub fn fit_model(
    corpus: &Corpus,
    mut config: HeadConfig,
    undersample: Option<UndersampleStrategy>,
) -> Result<FittedModel, PipelineError> {
    let provider = active_provider(corpus).ok_or(PipelineError::NoEmbeddings)?;
    config.input_dim = provider.dimension;
    let index = provider_index(corpus, &provider.id);
    let labels = corpus.effective_labels();
    let paragraphs = corpus.paragraph_index();
    let held_out: BTreeSet<&ParagraphId> = corpus.state.test_split.iter().collect();
    let train_ids = labels.keys().filter(|id| !held_out.contains(id));
    let mut train_set = dataset_from_index(train_ids, &index, &labels, &paragraphs)?;
    if let Some(strategy) = undersample {
        train_set = crate::classifier::undersample(&train_set, strategy);
    }
    if train_set.is_empty() {
        return Err(PipelineError::NoTrainingData(provider.id.clone()));
    }
    let test_set = dataset_from_index(held_out.iter().copied(), &index, &labels, &paragraphs)?;
    let outcome = train(&train_set, &config, None)?;
    let metrics = if test_set.is_empty() {
        evaluate(&outcome.params, &train_set, config.threshold)?
    } else {
        evaluate(&outcome.params, &test_set, config.threshold)?
    };
    Ok(FittedModel {
        record: ModelRecord {
            checkpoint_id: corpus.next_checkpoint_id(),
            provider_id: provider.id.clone(),
            config,
            metrics,
            train_size: train_set.len(),
            test_size: test_set.len(),
        },
        params: outcome.params,
        history: outcome.history,
    })
}

/// Makes `fitted` the current model and rescores the corpus. The checkpoint
/// id is reassigned if the corpus gained a checkpoint since fitting began.
pub fn install_model(
    corpus: &mut Corpus,
    mut fitted: FittedModel,
) -> Result<ModelRecord, PipelineError> {
    if corpus
        .checkpoints
        .contains_key(&fitted.record.checkpoint_id)
    {
        fitted.record.checkpoint_id = corpus.next_checkpoint_id();
    }
    let id = fitted.record.checkpoint_id.clone();
    corpus.checkpoints.insert(id, fitted.params);
    corpus.state.current_model = Some(fitted.record.clone());
    score_corpus(corpus)?;
    Ok(fitted.record)
}

/// Sets every paragraph's tension score from the current model; paragraphs
/// without an embedding from the model's provider get none.
pub fn score_corpus(corpus: &mut Corpus) -> Result<usize, PipelineError> {
    let record = corpus
        .state
        .current_model
        .clone()
        .ok_or(PipelineError::NoModel)?;
    let params = corpus
        .current_params()
        .ok_or(PipelineError::NoModel)?
        .clone();
    let mut scored = 0;
    for p in &mut corpus.paragraphs {
        p.tension_score = match corpus.embeddings.get(&p.id) {
            Some(v) if v.provider_id() == record.provider_id => {
                scored += 1;
                Some(predict_proba(&params, v)?)
            }
            _ => None,
        };
    }
    Ok(scored)
}

/// Embedded paragraphs the loop may ask about: the model's provider, outside
/// the test split.
pub fn al_candidates(corpus: &Corpus) -> Result<EmbeddingIndex, PipelineError> {
    let record = corpus
        .state
        .current_model
        .as_ref()
        .ok_or(PipelineError::NoModel)?;
    let held_out: BTreeSet<&ParagraphId> = corpus.state.test_split.iter().collect();
    let mut index = provider_index(corpus, &record.provider_id);
    index.retain(|id, _| !held_out.contains(id));
    Ok(index)
}

/// Fills the pending batch with the current model when no batch is open.
/// The first round is numbered 1. Returns whether a batch was opened.
pub fn open_round(
    corpus: &mut Corpus,
    batch_size: usize,
    threshold: f64,
) -> Result<bool, PipelineError> {
    if corpus
        .state
        .al
        .as_ref()
        .is_some_and(|s| !s.pending_ids.is_empty())
    {
        return Ok(false);
    }
    let params = corpus.current_params().ok_or(PipelineError::NoModel)?;
    let labelled = corpus.effective_labels();
    let mut scores = BTreeMap::new();
    for (id, v) in al_candidates(corpus)? {
        if !labelled.contains_key(&id) {
            scores.insert(id, predict_proba(params, &v)?);
        }
    }
    let mut state = corpus.state.al.clone().unwrap_or(ALState {
        round: 1,
        batch_size,
        threshold,
        pending_ids: Vec::new(),
    });
    state.pending_ids = select_uncertain(&scores, state.batch_size, state.threshold);
    let opened = !state.pending_ids.is_empty();
    corpus.state.al = Some(state);
    Ok(opened)
}

/// Pending ids that still lack an effective label.
pub fn unanswered(corpus: &Corpus) -> Vec<ParagraphId> {
    let Some(state) = &corpus.state.al else {
        return Vec::new();
    };
    let labels = corpus.effective_labels();
    state
        .pending_ids
        .iter()
        .filter(|id| !labels.contains_key(*id))
        .cloned()
        .collect()
}

/// Closes a fully answered round through [`al_round`]: the round counter
/// advances and the pending batch is left empty until the next model is
/// trained and [`open_round`] runs. Returns the training-label map after
/// the merge.
pub fn close_round(corpus: &mut Corpus) -> Result<BTreeMap<ParagraphId, u8>, PipelineError> {
    let state = corpus.state.al.clone().ok_or(PipelineError::NoModel)?;
    let params = corpus.current_params().ok_or(PipelineError::NoModel)?;
    let labels = corpus.effective_labels();
    let pending: BTreeSet<&ParagraphId> = state.pending_ids.iter().collect();
    let held_out: BTreeSet<&ParagraphId> = corpus.state.test_split.iter().collect();
    let mut answers = BTreeMap::new();
    let mut training = BTreeMap::new();
    for (id, &v) in &labels {
        if pending.contains(id) {
            answers.insert(id.clone(), v);
        } else if !held_out.contains(id) {
            training.insert(id.clone(), v);
        }
    }
    let (merged, mut next) =
        al_round(params, &al_candidates(corpus)?, &training, &state, &answers)?;
    next.pending_ids.clear();
    corpus.state.al = Some(next);
    Ok(merged)
}
