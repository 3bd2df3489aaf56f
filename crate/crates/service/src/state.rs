use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use chrono::Utc;
use serde::Deserialize;

use tension_core::annotation::{AnnotationLabel, Stage};
use tension_core::classifier::HeadConfig;
use tension_core::ingest::ParagraphId;
use tension_core::pipeline::{
    active_provider, close_round, ensure_test_split, fit_model, install_model, open_round,
    provider_index, unanswered, PipelineError, DEFAULT_TEST_RATIO,
};
use tension_core::store::{load_corpus, Corpus, StoreError, StoreLock};

use crate::error::ApiError;
use crate::views::{AnnotationReceipt, JobStatus, JobView};

/// Shared service state. Readers take the current snapshot and never block
/// on writers; writers are serialized, build a new corpus, persist it and
/// then swap the snapshot.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Shared>,
}

struct Shared {
    snapshot: RwLock<Arc<Corpus>>,
    writer: Mutex<StoreLock>,
    jobs: Mutex<Jobs>,
    settings: Settings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub al_batch_size: usize,
    pub seed: u64,
}

#[derive(Default)]
struct Jobs {
    issued: u32,
    active: Option<String>,
    /// Retrain requested while another job was running.
    queued: Option<(String, HeadConfig)>,
    records: BTreeMap<String, JobView>,
    /// Request and receipt of the submission that completed the last round,
    /// so a client retrying it gets the same answer.
    last_completion: Option<(AnnotationRequest, AnnotationReceipt)>,
}

impl Jobs {
    fn issue(&mut self, status: JobStatus) -> String {
        self.issued += 1;
        let id = format!("job-{:04}", self.issued);
        self.records.insert(
            id.clone(),
            JobView {
                id: id.clone(),
                status,
                checkpoint_id: None,
                error: None,
            },
        );
        id
    }

    fn busy(&self) -> bool {
        self.active.is_some() || self.queued.is_some()
    }
}

/// Optional overrides for [`HeadConfig`]; `input_dim` always comes from the
/// embedding provider.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    pub blocks: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub dropout_p: Option<f64>,
    pub pos_weight: Option<f64>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

impl TrainRequest {
    pub fn apply(&self, mut c: HeadConfig) -> HeadConfig {
        c.blocks = self.blocks.unwrap_or(c.blocks);
        c.hidden_dim = self.hidden_dim.unwrap_or(c.hidden_dim);
        c.dropout_p = self.dropout_p.unwrap_or(c.dropout_p);
        c.pos_weight = self.pos_weight.unwrap_or(c.pos_weight);
        c.learning_rate = self.learning_rate.unwrap_or(c.learning_rate);
        c.weight_decay = self.weight_decay.unwrap_or(c.weight_decay);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.seed = self.seed.unwrap_or(c.seed);
        c.threshold = self.threshold.unwrap_or(c.threshold);
        c
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub round: u32,
    pub annotator_id: String,
    pub labels: Vec<LabelEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelEntry {
    pub paragraph_id: String,
    pub value: u64,
}

impl AppState {
    pub fn new(corpus: Corpus, lock: StoreLock, settings: Settings) -> Self {
        AppState {
            inner: Arc::new(Shared {
                snapshot: RwLock::new(Arc::new(corpus)),
                writer: Mutex::new(lock),
                jobs: Mutex::new(Jobs::default()),
                settings,
            }),
        }
    }

    /// Takes the writer lock on `root` and loads the corpus; a store with no
    /// saved generation starts empty.
    pub fn open(root: &std::path::Path, settings: Settings) -> Result<Self, StoreError> {
        let lock = StoreLock::acquire(root)?;
        let corpus = match load_corpus(root) {
            Ok(c) => c,
            Err(StoreError::Missing(_)) => Corpus::default(),
            Err(e) => return Err(e),
        };
        Ok(Self::new(corpus, lock, settings))
    }

    pub fn settings(&self) -> Settings {
        self.inner.settings
    }

    pub fn snapshot(&self) -> Arc<Corpus> {
        self.inner
            .snapshot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    /// Applies `f` to a copy of the latest corpus. The copy is saved and
    /// published only if `f` succeeds and changed something.
    pub fn mutate<T>(
        &self,
        f: impl FnOnce(&mut Corpus) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let lock = self.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.snapshot();
        let mut next = (*current).clone();
        let out = f(&mut next)?;
        if next != *current {
            lock.save(&next)?;
            *self
                .inner
                .snapshot
                .write()
                .unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
        }
        Ok(out)
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, Jobs> {
        self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn job(&self, id: &str) -> Option<JobView> {
        self.jobs().records.get(id).cloned()
    }

    pub fn training_pending(&self) -> bool {
        self.jobs().busy()
    }

    fn default_config(&self, corpus: &Corpus) -> HeadConfig {
        match &corpus.state.current_model {
            Some(m) => m.config.clone(),
            None => {
                let mut c = HeadConfig::new(0);
                c.seed = self.inner.settings.seed;
                c
            }
        }
    }

    /// Starts a training job, or fails with 409 while one is running.
    pub fn start_training(&self, request: &TrainRequest) -> Result<String, ApiError> {
        let mut jobs = self.jobs();
        if jobs.busy() {
            return Err(ApiError::conflict(
                "training_in_progress",
                "a training job is already running; poll GET /jobs/{id}",
            ));
        }
        let seed = self.inner.settings.seed;
        let config = self.mutate(|c| {
            let mut config = request.apply(self.default_config(c));
            let provider = active_provider(c)
                .ok_or(PipelineError::NoEmbeddings)?
                .clone();
            config.input_dim = provider.dimension;
            config.validate().map_err(PipelineError::from)?;
            ensure_test_split(c, DEFAULT_TEST_RATIO, seed)?;
            if !has_training_data(c) {
                return Err(PipelineError::NoTrainingData(provider.id).into());
            }
            Ok(config)
        })?;
        let id = jobs.issue(JobStatus::Running);
        jobs.active = Some(id.clone());
        drop(jobs);
        self.spawn(id.clone(), config);
        Ok(id)
    }

    /// Retrains after a round closes: immediately when idle, otherwise once
    /// the running job finishes.
    fn schedule_retrain(&self) -> String {
        let config = self.default_config(&self.snapshot());
        let mut jobs = self.jobs();
        if let Some((id, _)) = &jobs.queued {
            return id.clone();
        }
        if jobs.active.is_some() {
            let id = jobs.issue(JobStatus::Queued);
            jobs.queued = Some((id.clone(), config));
            return id;
        }
        let id = jobs.issue(JobStatus::Running);
        jobs.active = Some(id.clone());
        drop(jobs);
        self.spawn(id.clone(), config);
        id
    }

    fn spawn(&self, id: String, config: HeadConfig) {
        let state = self.clone();
        std::thread::spawn(move || state.run_jobs(id, config));
    }

    fn run_jobs(&self, mut id: String, mut config: HeadConfig) {
        loop {
            tracing::info!(job = %id, "training started");
            let outcome = self.train_once(config);
            let mut jobs = self.jobs();
            if let Some(rec) = jobs.records.get_mut(&id) {
                match outcome {
                    Ok(checkpoint) => {
                        tracing::info!(job = %id, %checkpoint, "training finished");
                        rec.status = JobStatus::Succeeded;
                        rec.checkpoint_id = Some(checkpoint);
                    }
                    Err(e) => {
                        tracing::warn!(job = %id, error = %e.message, "training failed");
                        rec.status = JobStatus::Failed;
                        rec.error = Some(e.message);
                    }
                }
            }
            match jobs.queued.take() {
                Some((next, next_config)) => {
                    if let Some(rec) = jobs.records.get_mut(&next) {
                        rec.status = JobStatus::Running;
                    }
                    jobs.active = Some(next.clone());
                    id = next;
                    config = next_config;
                }
                None => {
                    jobs.active = None;
                    return;
                }
            }
        }
    }

    fn train_once(&self, config: HeadConfig) -> Result<String, ApiError> {
        let snapshot = self.snapshot();
        let fitted = fit_model(&snapshot, config, None)?;
        let batch = self.inner.settings.al_batch_size;
        self.mutate(|c| {
            let threshold = fitted.record.config.threshold;
            let record = install_model(c, fitted)?;
            open_round(c, batch, threshold)?;
            Ok(record.checkpoint_id)
        })
    }

    /// Records a batch of labels for the open round. All entries are checked
    /// before anything is written; labels identical to stored ones are left
    /// untouched.
    pub fn annotate(&self, request: AnnotationRequest) -> Result<AnnotationReceipt, ApiError> {
        let annotator = request.annotator_id.trim().to_owned();
        if annotator.is_empty() {
            return Err(ApiError::unprocessable(
                "invalid_annotator",
                "annotator_id must not be empty",
            ));
        }
        if request.labels.is_empty() {
            return Err(ApiError::unprocessable(
                "empty_submission",
                "labels must not be empty",
            ));
        }
        let mut values: BTreeMap<ParagraphId, u8> = BTreeMap::new();
        for entry in &request.labels {
            let value = match entry.value {
                0 => 0,
                1 => 1,
                v => {
                    return Err(ApiError::unprocessable(
                        "invalid_value",
                        format!(
                            "label for {} is {v}; values must be 0 or 1",
                            entry.paragraph_id
                        ),
                    ))
                }
            };
            let id = ParagraphId::new(entry.paragraph_id.clone());
            if values.insert(id, value).is_some_and(|v| v != value) {
                return Err(ApiError::unprocessable(
                    "conflicting_labels",
                    format!(
                        "{} is labelled twice with different values",
                        entry.paragraph_id
                    ),
                ));
            }
        }
        let outcome = self.mutate(|c| {
            let Some(state) = c.state.al.clone().filter(|s| !s.pending_ids.is_empty()) else {
                return Ok(Err(no_open_round()));
            };
            if let Err(e) = state.check_token(request.round) {
                return Ok(Err(ApiError::conflict(
                    "stale_round",
                    format!("{e}; fetch a new batch"),
                )));
            }
            for id in values.keys() {
                if !state.pending_ids.contains(id) {
                    return Err(ApiError::unprocessable(
                        "not_pending",
                        format!("{id} is not in the pending batch of round {}", state.round),
                    ));
                }
            }
            let mut store = c.annotation_store();
            let now = Utc::now();
            for (id, &value) in &values {
                let same = store.labels_for(id).any(|l| {
                    l.stage != Stage::Adjudicated && l.annotator_id == annotator && l.value == value
                });
                if !same {
                    let label = AnnotationLabel::new(
                        id.clone(),
                        annotator.clone(),
                        value,
                        Stage::ActiveLearning,
                        now,
                    )
                    .map_err(|e| ApiError::unprocessable("invalid_value", e.to_string()))?;
                    store
                        .record(label)
                        .map_err(|e| ApiError::unprocessable("not_pending", e.to_string()))?;
                }
            }
            c.labels = store.into_labels();
            let remaining = unanswered(c).len();
            if remaining == 0 {
                close_round(c)?;
            }
            Ok(Ok(AnnotationReceipt {
                round: state.round,
                accepted: values.len(),
                remaining,
                round_complete: remaining == 0,
                retrain_job: None,
            }))
        })?;
        let mut receipt = match outcome {
            Ok(r) => r,
            Err(e) => {
                return match &self.jobs().last_completion {
                    Some((req, receipt)) if *req == request => Ok(receipt.clone()),
                    _ => Err(e),
                }
            }
        };
        if receipt.round_complete {
            receipt.retrain_job = Some(self.schedule_retrain());
            self.jobs().last_completion = Some((request, receipt.clone()));
        }
        Ok(receipt)
    }
}

pub(crate) fn no_open_round() -> ApiError {
    ApiError::conflict(
        "no_open_round",
        "no active-learning batch is open; train a model with POST /train",
    )
}

fn has_training_data(c: &Corpus) -> bool {
    let Some(provider) = active_provider(c) else {
        return false;
    };
    let index = provider_index(c, &provider.id);
    c.effective_labels()
        .keys()
        .any(|id| index.contains_key(id) && !c.state.test_split.contains(id))
}
