//! Topic clustering, class-based TF-IDF keywords and topic rating helpers.

mod kmeans;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kmeans::{kmeans_cluster, KMeansResult, KMEANS_MAX_ITERATIONS, KMEANS_TOLERANCE};

use crate::embed::EmbeddingVector;
use crate::ingest::{Paragraph, ParagraphId};
use crate::preprocess::StemBag;

pub const DEFAULT_TOPIC_COUNT: usize = 64;
pub const DEFAULT_TOP_N: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum TopicsError {
    #[error("k = {k} exceeds the {n} vectors available")]
    TooFewVectors { k: usize, n: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("cluster {0} has no documents")]
    EmptyCluster(u32),
    #[error("rating score {0} outside 0..=2")]
    Score(u8),
    #[error("no ratings for rater `{0}`")]
    NoRatings(String),
    #[error("cannot sample {n} of {eligible} eligible paragraphs")]
    SampleTooLarge { n: usize, eligible: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: u32,
    /// Sorted by weight descending, ties by stem.
    pub keywords: Vec<(String, f64)>,
    pub member_ids: Vec<ParagraphId>,
}

/// One exported record per topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicExport {
    pub id: u32,
    pub keywords: Vec<(String, f64)>,
    pub member_count: usize,
}

impl From<&Topic> for TopicExport {
    fn from(t: &Topic) -> Self {
        TopicExport {
            id: t.id,
            keywords: t.keywords.clone(),
            member_count: t.member_ids.len(),
        }
    }
}

/// W(t, c) = tf(t, c) * ln(1 + A / f(t)), where A is the mean token count
/// per class and f(t) the count of t over all classes. Returns the `top_n`
/// heaviest stems of each cluster.
pub fn ctfidf_keywords(
    clusters: &BTreeMap<u32, Vec<StemBag>>,
    top_n: usize,
) -> Result<BTreeMap<u32, Vec<(String, f64)>>, TopicsError> {
    let mut class_bags = BTreeMap::new();
    for (&id, bags) in clusters {
        if bags.is_empty() {
            return Err(TopicsError::EmptyCluster(id));
        }
        let mut merged = StemBag::new();
        for b in bags {
            merged.merge(b);
        }
        class_bags.insert(id, merged);
    }
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    let mut all_tokens = 0u64;
    for bag in class_bags.values() {
        for (stem, count) in bag.iter() {
            *totals.entry(stem).or_insert(0) += u64::from(count);
            all_tokens += u64::from(count);
        }
    }
    let average = if class_bags.is_empty() {
        0.0
    } else {
        all_tokens as f64 / class_bags.len() as f64
    };
    let mut out = BTreeMap::new();
    for (&id, bag) in &class_bags {
        let mut weighted: Vec<(String, f64)> = bag
            .iter()
            .map(|(stem, count)| {
                let w = f64::from(count) * (1.0 + average / totals[stem] as f64).ln();
                (stem.to_owned(), w)
            })
            .collect();
        weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        weighted.truncate(top_n);
        out.insert(id, weighted);
    }
    Ok(out)
}

/// Clusters paragraphs with non-empty stem bags and labels each cluster with
/// its c-TF-IDF keywords. Clusters left empty by k-means yield no topic.
pub fn build_topics(
    items: &[(ParagraphId, StemBag, EmbeddingVector)],
    k: usize,
    top_n: usize,
    seed: u64,
) -> Result<Vec<Topic>, TopicsError> {
    let usable: Vec<&(ParagraphId, StemBag, EmbeddingVector)> =
        items.iter().filter(|(_, bag, _)| !bag.is_empty()).collect();
    let vectors: Vec<EmbeddingVector> = usable.iter().map(|(_, _, v)| v.clone()).collect();
    let result = kmeans_cluster(&vectors, k, seed)?;
    let mut members: BTreeMap<u32, Vec<ParagraphId>> = BTreeMap::new();
    let mut bags: BTreeMap<u32, Vec<StemBag>> = BTreeMap::new();
    for (item, &cluster) in usable.iter().zip(&result.assignments) {
        let cluster = cluster as u32;
        members.entry(cluster).or_default().push(item.0.clone());
        bags.entry(cluster).or_default().push(item.1.clone());
    }
    let keywords = ctfidf_keywords(&bags, top_n)?;
    Ok(members
        .into_iter()
        .map(|(id, mut member_ids)| {
            member_ids.sort();
            Topic {
                id,
                keywords: keywords[&id].clone(),
                member_ids,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicRating {
    pub paragraph_id: ParagraphId,
    pub rater_id: String,
    pub score: u8,
}

impl TopicRating {
    pub fn new(
        paragraph_id: ParagraphId,
        rater_id: impl Into<String>,
        score: u8,
    ) -> Result<Self, TopicsError> {
        if score > 2 {
            return Err(TopicsError::Score(score));
        }
        Ok(TopicRating {
            paragraph_id,
            rater_id: rater_id.into(),
            score,
        })
    }
}

pub fn average_topic_rating(ratings: &[TopicRating], rater_id: &str) -> Result<f64, TopicsError> {
    let scores: Vec<f64> = ratings
        .iter()
        .filter(|r| r.rater_id == rater_id)
        .map(|r| f64::from(r.score))
        .collect();
    if scores.is_empty() {
        return Err(TopicsError::NoRatings(rater_id.to_owned()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Uniform sample without replacement among paragraphs that carry a topic.
pub fn sample_for_rating(
    paragraphs: &[Paragraph],
    n: usize,
    seed: u64,
) -> Result<Vec<ParagraphId>, TopicsError> {
    let eligible: BTreeSet<&ParagraphId> = paragraphs
        .iter()
        .filter(|p| p.topic_id.is_some())
        .map(|p| &p.id)
        .collect();
    if n > eligible.len() {
        return Err(TopicsError::SampleTooLarge {
            n,
            eligible: eligible.len(),
        });
    }
    let mut ids: Vec<ParagraphId> = eligible.into_iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (chosen, _) = ids.partial_shuffle(&mut rng, n);
    Ok(chosen.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(items: &[(&str, u32)]) -> StemBag {
        items.iter().map(|&(s, c)| (s, c)).collect()
    }

    #[test]
    fn ctfidf_hand_example() {
        let clusters = BTreeMap::from([
            (0, vec![bag(&[("apple", 2), ("banana", 1)])]),
            (1, vec![bag(&[("banana", 1), ("cherry", 1)])]),
        ]);
        let kw = ctfidf_keywords(&clusters, 10).unwrap();
        let apple = kw[&0].iter().find(|(s, _)| s == "apple").unwrap().1;
        assert!((apple - 2.0 * 2.25f64.ln()).abs() < 1e-9);
        assert!((apple - 1.6219).abs() < 1e-4);
        assert_eq!(kw[&0][0].0, "apple");
        let b0 = kw[&0].iter().find(|(s, _)| s == "banana").unwrap().1;
        let b1 = kw[&1].iter().find(|(s, _)| s == "banana").unwrap().1;
        assert_eq!(b0, b1);
    }

    #[test]
    fn ctfidf_single_term_and_empty_cluster() {
        let clusters = BTreeMap::from([(3, vec![bag(&[("only", 4)])])]);
        assert_eq!(ctfidf_keywords(&clusters, 1).unwrap()[&3][0].0, "only");
        let bad = BTreeMap::from([(7, vec![])]);
        assert_eq!(ctfidf_keywords(&bad, 1), Err(TopicsError::EmptyCluster(7)));
    }

    #[test]
    fn rating_average() {
        let id = ParagraphId::new("WHC-35:x");
        let rs: Vec<TopicRating> = [2, 2, 1, 1]
            .iter()
            .map(|&s| TopicRating::new(id.clone(), "r1", s).unwrap())
            .collect();
        assert_eq!(average_topic_rating(&rs, "r1").unwrap(), 1.5);
        assert!(matches!(
            average_topic_rating(&rs, "r2"),
            Err(TopicsError::NoRatings(_))
        ));
        assert_eq!(TopicRating::new(id, "r1", 3), Err(TopicsError::Score(3)));
    }
}
