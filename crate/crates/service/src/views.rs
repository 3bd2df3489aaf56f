use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use tension_core::classifier::{HeadConfig, Metrics};
use tension_core::ingest::Paragraph;
use tension_core::store::Corpus;

pub const TOPIC_KEYWORDS: usize = 5;

/// What the UI shows for one paragraph. Optional fields are always present
/// and serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphView {
    pub id: String,
    pub session: String,
    pub ordinal: u32,
    pub text: String,
    pub speaker: Option<String>,
    pub tension_score: Option<f64>,
    pub topic_keywords: Vec<String>,
}

/// Renders paragraphs of one corpus, resolving topic keywords once.
pub struct Renderer {
    keywords: BTreeMap<u32, Vec<String>>,
}

impl Renderer {
    pub fn new(corpus: &Corpus) -> Self {
        let keywords = corpus
            .topics
            .iter()
            .map(|t| {
                let words = t
                    .keywords
                    .iter()
                    .take(TOPIC_KEYWORDS)
                    .map(|(w, _)| w.clone())
                    .collect();
                (t.id, words)
            })
            .collect();
        Renderer { keywords }
    }

    pub fn view(&self, p: &Paragraph) -> ParagraphView {
        ParagraphView {
            id: p.id.as_str().to_owned(),
            session: p.session.label(),
            ordinal: p.ordinal,
            text: p.clean_text.clone(),
            speaker: p.speaker.as_ref().map(|a| a.name.clone()),
            tension_score: p.tension_score,
            topic_keywords: p
                .topic_id
                .and_then(|t| self.keywords.get(&t))
                .cloned()
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedView {
    pub similarity: f64,
    #[serde(flatten)]
    pub paragraph: ParagraphView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchItem {
    /// Whether a label for this paragraph has already been recorded.
    pub answered: bool,
    #[serde(flatten)]
    pub paragraph: ParagraphView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    /// Round token to echo back in `POST /annotations`.
    pub round: Option<u32>,
    pub threshold: Option<f64>,
    /// True while a retrain is pending; the next batch appears when it ends.
    pub retraining: bool,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReceipt {
    pub round: u32,
    pub accepted: usize,
    /// Pending paragraphs still without a label.
    pub remaining: usize,
    pub round_complete: bool,
    /// Training job started because the round completed.
    pub retrain_job: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    pub checkpoint_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub checkpoint_id: String,
    pub provider_id: String,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub config: HeadConfig,
}

impl MetricsView {
    pub fn new(record: &tension_core::store::ModelRecord) -> Self {
        let Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            accuracy,
        } = record.metrics;
        MetricsView {
            checkpoint_id: record.checkpoint_id.clone(),
            provider_id: record.provider_id.clone(),
            precision,
            recall,
            accuracy,
            tp,
            fp,
            fn_,
            tn,
            train_size: record.train_size,
            test_size: record.test_size,
            config: record.config.clone(),
        }
    }
}
