//! Expert labels, agreement, adjudication and the active-learning loop.

mod active;
mod csvio;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use active::{al_round, select_uncertain, ALState, DEFAULT_AL_BATCH, DEFAULT_AL_THRESHOLD};
pub use csvio::{read_labels_csv, write_labels_csv, LABEL_CSV_HEADER};

use crate::classifier::ClassifierError;
use crate::ingest::ParagraphId;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("label value {0} is not 0 or 1")]
    Value(u8),
    #[error("unknown paragraph {0}")]
    NotFound(ParagraphId),
    #[error("paragraph {0} is already adjudicated; revise the adjudication instead")]
    AlreadyAdjudicated(ParagraphId),
    #[error("paragraph {0} has no adjudication to revise")]
    NotAdjudicated(ParagraphId),
    #[error("label lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label lists are empty")]
    Empty,
    #[error("submitted labels do not match the pending batch: {0}")]
    PendingMismatch(String),
    #[error("round token {found} is stale, current round is {expected}")]
    StaleRound { expected: u32, found: u32 },
    #[error("label CSV line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    ActiveLearning,
    Adjudicated,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::ActiveLearning => "active_learning",
            Stage::Adjudicated => "adjudicated",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "initial" => Ok(Stage::Initial),
            "active_learning" | "activelearning" => Ok(Stage::ActiveLearning),
            "adjudicated" => Ok(Stage::Adjudicated),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLabel {
    pub paragraph_id: ParagraphId,
    pub annotator_id: String,
    pub value: u8,
    pub stage: Stage,
    pub timestamp: DateTime<Utc>,
}

impl AnnotationLabel {
    pub fn new(
        paragraph_id: ParagraphId,
        annotator_id: impl Into<String>,
        value: u8,
        stage: Stage,
        timestamp: DateTime<Utc>,
    ) -> Result<Self, AnnotationError> {
        if value > 1 {
            return Err(AnnotationError::Value(value));
        }
        Ok(AnnotationLabel {
            paragraph_id,
            annotator_id: annotator_id.into(),
            value,
            stage,
            timestamp,
        })
    }
}

/// Labels for a known set of paragraphs. Non-adjudicated labels are unique
/// per (paragraph, annotator); a later label from the same annotator
/// replaces the earlier one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationStore {
    known: BTreeSet<ParagraphId>,
    labels: Vec<AnnotationLabel>,
}

impl AnnotationStore {
    pub fn new(known: impl IntoIterator<Item = ParagraphId>) -> Self {
        AnnotationStore {
            known: known.into_iter().collect(),
            labels: Vec::new(),
        }
    }

    /// Rebuilds a store from labels that were already validated, e.g. ones
    /// read back from disk.
    pub fn from_parts(
        known: impl IntoIterator<Item = ParagraphId>,
        labels: Vec<AnnotationLabel>,
    ) -> Self {
        AnnotationStore {
            known: known.into_iter().collect(),
            labels,
        }
    }

    pub fn into_labels(self) -> Vec<AnnotationLabel> {
        self.labels
    }

    pub fn register(&mut self, id: ParagraphId) {
        self.known.insert(id);
    }

    pub fn is_known(&self, id: &ParagraphId) -> bool {
        self.known.contains(id)
    }

    pub fn labels(&self) -> &[AnnotationLabel] {
        &self.labels
    }

    pub fn labels_for<'a>(
        &'a self,
        id: &'a ParagraphId,
    ) -> impl Iterator<Item = &'a AnnotationLabel> + 'a {
        self.labels.iter().filter(move |l| &l.paragraph_id == id)
    }

    fn check_known(&self, id: &ParagraphId) -> Result<(), AnnotationError> {
        if !self.known.contains(id) {
            return Err(AnnotationError::NotFound(id.clone()));
        }
        Ok(())
    }

    /// Adds a label. Adjudicated labels go through [`Self::adjudicate`] rules.
    pub fn record(&mut self, label: AnnotationLabel) -> Result<(), AnnotationError> {
        if label.value > 1 {
            return Err(AnnotationError::Value(label.value));
        }
        self.check_known(&label.paragraph_id)?;
        if label.stage == Stage::Adjudicated {
            if self.is_adjudicated(&label.paragraph_id) {
                return Err(AnnotationError::AlreadyAdjudicated(label.paragraph_id));
            }
            self.labels.push(label);
            return Ok(());
        }
        match self.labels.iter_mut().find(|l| {
            l.stage != Stage::Adjudicated
                && l.paragraph_id == label.paragraph_id
                && l.annotator_id == label.annotator_id
        }) {
            Some(existing) => *existing = label,
            None => self.labels.push(label),
        }
        Ok(())
    }

    pub fn is_adjudicated(&self, id: &ParagraphId) -> bool {
        self.labels_for(id).any(|l| l.stage == Stage::Adjudicated)
    }

    pub fn adjudicate(
        &mut self,
        id: &ParagraphId,
        value: u8,
        adjudicator_id: &str,
        timestamp: DateTime<Utc>,
    ) -> Result<AnnotationLabel, AnnotationError> {
        self.check_known(id)?;
        let label = AnnotationLabel::new(
            id.clone(),
            adjudicator_id,
            value,
            Stage::Adjudicated,
            timestamp,
        )?;
        if self.is_adjudicated(id) {
            return Err(AnnotationError::AlreadyAdjudicated(id.clone()));
        }
        self.labels.push(label.clone());
        Ok(label)
    }

    /// Replaces an existing adjudication.
    pub fn revise_adjudication(
        &mut self,
        id: &ParagraphId,
        value: u8,
        adjudicator_id: &str,
        timestamp: DateTime<Utc>,
    ) -> Result<AnnotationLabel, AnnotationError> {
        self.check_known(id)?;
        let label = AnnotationLabel::new(
            id.clone(),
            adjudicator_id,
            value,
            Stage::Adjudicated,
            timestamp,
        )?;
        let slot = self
            .labels
            .iter_mut()
            .find(|l| &l.paragraph_id == id && l.stage == Stage::Adjudicated)
            .ok_or_else(|| AnnotationError::NotAdjudicated(id.clone()))?;
        *slot = label.clone();
        Ok(label)
    }

    /// The adjudicated value if any, else the annotators' value when they
    /// all agree. Disagreement or no labels give `None`.
    pub fn effective_label(&self, id: &ParagraphId) -> Option<u8> {
        let mut values = BTreeSet::new();
        for l in self.labels_for(id) {
            if l.stage == Stage::Adjudicated {
                return Some(l.value);
            }
            values.insert(l.value);
        }
        match values.len() {
            1 => values.first().copied(),
            _ => None,
        }
    }

    pub fn effective_labels(&self) -> BTreeMap<ParagraphId, u8> {
        let ids: BTreeSet<&ParagraphId> = self.labels.iter().map(|l| &l.paragraph_id).collect();
        ids.into_iter()
            .filter_map(|id| self.effective_label(id).map(|v| (id.clone(), v)))
            .collect()
    }

    /// Paragraphs whose annotators disagree and that have no adjudication.
    pub fn conflicts(&self) -> Vec<ParagraphId> {
        let ids: BTreeSet<&ParagraphId> = self.labels.iter().map(|l| &l.paragraph_id).collect();
        ids.into_iter()
            .filter(|id| !self.is_adjudicated(id) && self.effective_label(id).is_none())
            .cloned()
            .collect()
    }

    pub fn annotators(&self) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|l| l.stage != Stage::Adjudicated)
            .map(|l| l.annotator_id.clone())
            .collect()
    }

    /// Paired values of two annotators over the paragraphs both labelled,
    /// in paragraph id order.
    pub fn paired_values(&self, a: &str, b: &str) -> (Vec<u8>, Vec<u8>) {
        let of = |who: &str| -> BTreeMap<&ParagraphId, u8> {
            self.labels
                .iter()
                .filter(|l| l.stage != Stage::Adjudicated && l.annotator_id == who)
                .map(|l| (&l.paragraph_id, l.value))
                .collect()
        };
        let (la, lb) = (of(a), of(b));
        la.iter()
            .filter_map(|(id, &va)| lb.get(id).map(|&vb| (va, vb)))
            .unzip()
    }

    /// Kappa for every annotator pair with at least one shared paragraph.
    pub fn pairwise_kappa(&self) -> Vec<(String, String, usize, f64)> {
        let names: Vec<String> = self.annotators().into_iter().collect();
        let mut out = Vec::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                let (va, vb) = self.paired_values(a, b);
                if let Ok(k) = cohen_kappa(&va, &vb) {
                    out.push((a.clone(), b.clone(), va.len(), k));
                }
            }
        }
        out
    }
}

/// Cohen's kappa for two binary label lists. When chance agreement is 1 the
/// result is 1 for perfect observed agreement, else 0.
pub fn cohen_kappa(a: &[u8], b: &[u8]) -> Result<f64, AnnotationError> {
    if a.len() != b.len() {
        return Err(AnnotationError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(AnnotationError::Empty);
    }
    if let Some(&bad) = a.iter().chain(b).find(|&&v| v > 1) {
        return Err(AnnotationError::Value(bad));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let a1 = a.iter().filter(|&&v| v == 1).count() as f64;
    let b1 = b.iter().filter(|&&v| v == 1).count() as f64;
    let p_o = agree / n;
    let p_e = (a1 / n) * (b1 / n) + ((n - a1) / n) * ((n - b1) / n);
    if p_e == 1.0 {
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
