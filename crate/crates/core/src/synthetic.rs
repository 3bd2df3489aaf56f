//! Seeded synthetic paragraphs for demos and tests.
//!
//! Positive paragraphs draw their signal words from a family of
//! disagreement vocabulary, negatives from a family of procedural praise.
//! Both share filler vocabulary and speaker phrases, so the classes are
//! separable only through the signal words.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{LabelledDataset, LabelledItem};
use crate::embed::{hash_embed, EmbeddingIndex, EmbeddingVector, IdfTable};
use crate::ingest::{
    detect_language, extract_speaker, ActorLexicon, Convention, Paragraph, ParagraphId,
    SessionKind, SessionRef,
};
use crate::preprocess::{preprocess_for_topics, StemBag, TokenFilterConfig};

pub const TENSION_WORDS: &[&str] = &[
    "objection",
    "dispute",
    "controversy",
    "disagree",
    "oppose",
    "reject",
    "protest",
    "conflict",
    "contest",
    "criticise",
    "danger",
    "refuse",
    "deplore",
    "regret",
    "condemn",
    "challenge",
];

pub const HARMONY_WORDS: &[&str] = &[
    "congratulate",
    "thank",
    "welcome",
    "adopt",
    "approve",
    "celebrate",
    "appreciate",
    "commend",
    "endorse",
    "praise",
    "gratitude",
    "pleased",
    "honour",
    "acknowledge",
    "cooperate",
    "consensus",
];

pub const FILLER_WORDS: &[&str] = &[
    "property",
    "site",
    "heritage",
    "draft",
    "decision",
    "nomination",
    "report",
    "management",
    "plan",
    "boundary",
    "mission",
    "item",
    "agenda",
    "paragraph",
    "amendment",
    "buffer",
    "zone",
    "conservation",
    "museum",
    "river",
    "valley",
    "city",
    "monument",
    "landscape",
    "archaeological",
    "cultural",
    "natural",
    "inscription",
    "criteria",
    "integrity",
    "authenticity",
    "tourism",
    "urban",
    "development",
    "periodic",
    "reporting",
    "budget",
    "fund",
    "assistance",
    "evaluation",
    "advisory",
    "body",
    "expert",
    "meeting",
];

const SPEAKERS: &[&str] = &[
    "The delegation of Norway",
    "The delegation of India",
    "The delegation of Brazil",
    "The delegation of Egypt",
    "The Chairperson",
    "The Rapporteur",
    "ICOMOS",
    "The delegation of Australia",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub items: usize,
    pub positive_fraction: f64,
    /// Signal words per paragraph.
    pub signal_words: usize,
    pub filler_words: usize,
    /// Probability that a signal word comes from the other class's family.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Balanced and cleanly separable.
    pub fn separable(items: usize, seed: u64) -> Self {
        SyntheticSpec {
            items,
            positive_fraction: 0.5,
            signal_words: 3,
            filler_words: 8,
            noise: 0.0,
            seed,
        }
    }
}

/// `(text, label)` pairs. The exact number of positives is
/// `round(items * positive_fraction)`, placed at seeded positions.
pub fn synthetic_texts(spec: &SyntheticSpec) -> Vec<(String, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positives = (spec.items as f64 * spec.positive_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..spec.items).map(|i| u8::from(i < positives)).collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    labels
        .into_iter()
        .map(|label| {
            let speaker = *SPEAKERS.choose(&mut rng).expect("non-empty");
            let mut words: Vec<&str> = Vec::new();
            for _ in 0..spec.signal_words {
                let flip = rng.random::<f64>() < spec.noise;
                let family = if (label == 1) != flip {
                    TENSION_WORDS
                } else {
                    HARMONY_WORDS
                };
                words.push(family.choose(&mut rng).expect("non-empty"));
            }
            for _ in 0..spec.filler_words {
                words.push(FILLER_WORDS.choose(&mut rng).expect("non-empty"));
            }
            rand::seq::SliceRandom::shuffle(words.as_mut_slice(), &mut rng);
            (
                format!("{speaker} spoke about the {}.", words.join(" ")),
                label,
            )
        })
        .collect()
}

pub fn stem_bags(texts: &[(String, u8)]) -> Vec<StemBag> {
    let config = TokenFilterConfig::default();
    texts
        .iter()
        .map(|(t, _)| preprocess_for_topics(t, &config))
        .collect()
}

/// Hash embeddings with an IDF table fitted on `texts` themselves.
pub fn hashing_dataset(texts: &[(String, u8)], dimension: usize) -> LabelledDataset {
    let bags = stem_bags(texts);
    let idf = IdfTable::from_bags(&bags);
    let items = bags
        .iter()
        .zip(texts)
        .map(|(bag, (_, label))| LabelledItem::new(hash_embed(bag, dimension, &idf), *label))
        .collect();
    LabelledDataset::new(items).expect("synthetic labels are binary and share a provider")
}

/// Synthetic session paragraphs split between WHC-35 and ICHC-12, with
/// their ground-truth labels, hash embeddings and stem bags.
pub struct SyntheticCorpus {
    pub paragraphs: Vec<Paragraph>,
    pub truth: BTreeMap<ParagraphId, u8>,
    pub embeddings: EmbeddingIndex,
    pub bags: BTreeMap<ParagraphId, StemBag>,
}

pub fn synthetic_corpus(spec: &SyntheticSpec, dimension: usize) -> SyntheticCorpus {
    let sessions = [
        SessionRef {
            convention: Convention::Whc,
            number: 35,
            kind: SessionKind::Ordinary,
            year: 2011,
        },
        SessionRef {
            convention: Convention::Ichc,
            number: 12,
            kind: SessionKind::Ordinary,
            year: 2017,
        },
    ];
    let texts = synthetic_texts(spec);
    let bags = stem_bags(&texts);
    let idf = IdfTable::from_bags(&bags);
    let lexicon = ActorLexicon::bundled();
    let mut ordinals = [0u32; 2];
    let mut seen: BTreeMap<(usize, String), usize> = BTreeMap::new();
    let mut out = SyntheticCorpus {
        paragraphs: Vec::new(),
        truth: BTreeMap::new(),
        embeddings: BTreeMap::new(),
        bags: BTreeMap::new(),
    };
    for (i, ((text, label), bag)) in texts.iter().zip(bags).enumerate() {
        let s = i % 2;
        let occurrence = seen.entry((s, text.clone())).or_insert(0);
        let id = ParagraphId::for_content(&sessions[s], text, *occurrence);
        *occurrence += 1;
        let vector: EmbeddingVector = hash_embed(&bag, dimension, &idf);
        out.paragraphs.push(Paragraph {
            id: id.clone(),
            session: sessions[s].clone(),
            ordinal: ordinals[s],
            raw_text: text.clone(),
            clean_text: text.clone(),
            language: detect_language(text),
            speaker: extract_speaker(text, lexicon),
            tension_score: None,
            topic_id: None,
        });
        ordinals[s] += 1;
        out.truth.insert(id.clone(), *label);
        out.embeddings.insert(id.clone(), vector);
        out.bags.insert(id, bag);
    }
    out
}
