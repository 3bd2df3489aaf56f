use std::collections::BTreeMap;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::embed::{EmbeddingIndex, EmbeddingVector};
use crate::ingest::{Paragraph, ParagraphId};

pub const DEFAULT_DROP_INTRO: usize = 20;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMeta {
    pub paragraph_id: Option<ParagraphId>,
    /// Session label, e.g. `WHC-35`.
    pub session: Option<String>,
    pub ordinal: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledItem {
    pub embedding: EmbeddingVector,
    pub label: u8,
    pub meta: ItemMeta,
}

impl LabelledItem {
    pub fn new(embedding: EmbeddingVector, label: u8) -> Self {
        LabelledItem {
            embedding,
            label,
            meta: ItemMeta::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelledDataset {
    items: Vec<LabelledItem>,
}

impl LabelledDataset {
    pub fn new(items: Vec<LabelledItem>) -> Result<Self, ClassifierError> {
        if let Some(bad) = items.iter().find(|i| i.label > 1) {
            return Err(ClassifierError::Label(bad.label));
        }
        if let Some(first) = items.first() {
            let (pid, dim) = (first.embedding.provider_id(), first.embedding.dimension());
            for item in &items {
                if item.embedding.provider_id() != pid || item.embedding.dimension() != dim {
                    return Err(ClassifierError::MixedProviders(
                        pid.to_owned(),
                        item.embedding.provider_id().to_owned(),
                    ));
                }
            }
        }
        Ok(LabelledDataset { items })
    }

    pub fn items(&self) -> &[LabelledItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.label == 1).count()
    }

    pub fn into_items(self) -> Vec<LabelledItem> {
        self.items
    }

    fn subset(&self, mut indices: Vec<usize>) -> LabelledDataset {
        indices.sort_unstable();
        LabelledDataset {
            items: indices.into_iter().map(|i| self.items[i].clone()).collect(),
        }
    }
}

/// Dataset of the `ids` that have both an embedding and a label, with
/// session metadata taken from `paragraphs`.
pub fn dataset_from_index<'a>(
    ids: impl IntoIterator<Item = &'a ParagraphId>,
    embeddings: &EmbeddingIndex,
    labels: &BTreeMap<ParagraphId, u8>,
    paragraphs: &BTreeMap<&ParagraphId, &Paragraph>,
) -> Result<LabelledDataset, ClassifierError> {
    let items = ids
        .into_iter()
        .filter_map(|id| {
            let v = embeddings.get(id)?;
            let label = *labels.get(id)?;
            let p = paragraphs.get(id);
            Some(LabelledItem {
                embedding: v.clone(),
                label,
                meta: ItemMeta {
                    paragraph_id: Some(id.clone()),
                    session: p.map(|p| p.session.label()),
                    ordinal: p.map(|p| p.ordinal),
                },
            })
        })
        .collect();
    LabelledDataset::new(items)
}

/// Train/test split, deterministic by seed. The train side gets
/// `floor(n * ratio)` items; under stratification each class gets the floor
/// of its share and leftover slots go to the largest fractional remainders.
pub fn split_dataset(
    dataset: &LabelledDataset,
    ratio: f64,
    seed: u64,
    stratified: bool,
) -> Result<(LabelledDataset, LabelledDataset), ClassifierError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ClassifierError::Ratio(ratio));
    }
    let n = dataset.len();
    let train_total = (n as f64 * ratio + 1e-9).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(train_total);
    let mut test = Vec::with_capacity(n - train_total);
    if stratified {
        let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, item) in dataset.items.iter().enumerate() {
            classes[item.label as usize].push(i);
        }
        for (label, members) in classes.iter().enumerate() {
            if members.is_empty() {
                return Err(ClassifierError::EmptyClass(label as u8));
            }
        }
        let exact: Vec<f64> = classes.iter().map(|c| c.len() as f64 * ratio).collect();
        let mut quota: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
        let mut order = [0usize, 1];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - quota[a] as f64;
            let rb = exact[b] - quota[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = train_total - quota.iter().sum::<usize>();
        for &c in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if quota[c] < classes[c].len() {
                quota[c] += 1;
                left -= 1;
            }
        }
        for (c, members) in classes.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..quota[c]]);
            test.extend_from_slice(&members[quota[c]..]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        train.extend_from_slice(&all[..train_total]);
        test.extend_from_slice(&all[train_total..]);
    }
    Ok((dataset.subset(train), dataset.subset(test)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UndersampleStrategy {
    /// Drop the first `n` paragraphs (by ordinal) of every session.
    DropIntro { n: usize },
    /// Drop `floor(fraction * negatives)` negatives chosen by seed.
    RandomNegativeDrop { fraction: f64, seed: u64 },
}

/// Items without session metadata are never dropped by `DropIntro`.
pub fn undersample(dataset: &LabelledDataset, strategy: UndersampleStrategy) -> LabelledDataset {
    match strategy {
        UndersampleStrategy::DropIntro { n } => {
            let mut by_session: BTreeMap<&str, Vec<(u32, usize)>> = BTreeMap::new();
            for (i, item) in dataset.items.iter().enumerate() {
                if let (Some(s), Some(o)) = (&item.meta.session, item.meta.ordinal) {
                    by_session.entry(s.as_str()).or_default().push((o, i));
                }
            }
            let mut dropped = vec![false; dataset.len()];
            for members in by_session.values_mut() {
                members.sort_unstable();
                for &(_, i) in members.iter().take(n) {
                    dropped[i] = true;
                }
            }
            dataset.subset((0..dataset.len()).filter(|&i| !dropped[i]).collect())
        }
        UndersampleStrategy::RandomNegativeDrop { fraction, seed } => {
            let fraction = fraction.clamp(0.0, 1.0);
            let mut negatives: Vec<usize> = (0..dataset.len())
                .filter(|&i| dataset.items[i].label == 0)
                .collect();
            let drop = (negatives.len() as f64 * fraction + 1e-9).floor() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            negatives.shuffle(&mut rng);
            let mut dropped = vec![false; dataset.len()];
            for &i in &negatives[..drop] {
                dropped[i] = true;
            }
            dataset.subset((0..dataset.len()).filter(|&i| !dropped[i]).collect())
        }
    }
}

#[derive(Deserialize)]
struct CsvRow {
    text: String,
    label: String,
}

/// Reads `text,label` CSV with a mandatory header row.
pub fn load_labelled_csv(reader: impl Read) -> Result<Vec<(String, u8)>, ClassifierError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ClassifierError::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if !headers.iter().any(|h| h == "text") || !headers.iter().any(|h| h == "label") {
        return Err(ClassifierError::Csv {
            line: 1,
            message: "header must name columns `text` and `label`".into(),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<CsvRow>() {
        let row = row.map_err(|e| ClassifierError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let label = match row.label.trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(ClassifierError::Csv {
                    line,
                    message: format!("label `{other}` is not 0 or 1"),
                })
            }
        };
        out.push((row.text, label));
    }
    Ok(out)
}
