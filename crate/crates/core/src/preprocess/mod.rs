//! Text normalisation for topic modelling: tokenize, filter, stem, count.

mod porter;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use porter::porter_stem;

use crate::ingest::ActorLexicon;

const STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");
const REMOVED_PHRASES: &str = include_str!("../../data/removed_phrases.txt");

/// Reads a one-term-per-line list, skipping blanks and `#` comments.
pub fn parse_term_list(source: &str) -> BTreeSet<String> {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_term_list(STOPWORDS)
}

pub fn default_removed_phrases() -> BTreeSet<String> {
    parse_term_list(REMOVED_PHRASES)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFilterConfig {
    pub stopwords: BTreeSet<String>,
    /// Surface forms; a token is dropped when it or its stem matches one.
    pub removed_phrases: BTreeSet<String>,
    /// Drop country names (including multi-word names) and demonyms.
    pub drop_country_terms: bool,
    pub min_token_length: usize,
}

impl Default for TokenFilterConfig {
    fn default() -> Self {
        TokenFilterConfig {
            stopwords: default_stopwords(),
            removed_phrases: default_removed_phrases(),
            drop_country_terms: true,
            min_token_length: 2,
        }
    }
}

/// Lexical-category filter applied after the stopword/phrase filter. The
/// default keeps every token; a part-of-speech tagger can be plugged in here.
pub trait TokenCategoryFilter {
    fn keep(&self, token: &str) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KeepAll;

impl TokenCategoryFilter for KeepAll {
    fn keep(&self, _token: &str) -> bool {
        true
    }
}

/// Lowercase runs of letters. An apostrophe between two letters stays in
/// the token (`committee's`); everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if matches!(c, '\'' | '’')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphabetic())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// `committee's` -> `committee`.
fn strip_possessive(token: &str) -> &str {
    token.strip_suffix("'s").unwrap_or(token)
}

/// Tokenized country names and demonyms from the bundled lexicon, longest
/// first.
fn country_sequences() -> &'static [Vec<String>] {
    static SEQ: OnceLock<Vec<Vec<String>>> = OnceLock::new();
    SEQ.get_or_init(|| {
        let lexicon = ActorLexicon::bundled();
        let mut seqs: BTreeSet<Vec<String>> = BTreeSet::new();
        for name in lexicon
            .countries()
            .iter()
            .flat_map(|(alias, canonical)| [alias, canonical])
            .chain(lexicon.demonyms().keys())
        {
            let toks = tokenize(name);
            if !toks.is_empty() {
                seqs.insert(toks);
            }
        }
        let mut seqs: Vec<Vec<String>> = seqs.into_iter().collect();
        seqs.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        seqs
    })
}

fn country_match_len(tokens: &[String], at: usize) -> Option<usize> {
    country_sequences()
        .iter()
        .find(|seq| tokens[at..].starts_with(seq))
        .map(Vec::len)
}

pub fn filter_tokens(tokens: &[String], config: &TokenFilterConfig) -> Vec<String> {
    let removed_stems: BTreeSet<String> = config
        .removed_phrases
        .iter()
        .map(|p| porter_stem(p))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if config.drop_country_terms {
            if let Some(len) = country_match_len(tokens, i) {
                i += len;
                continue;
            }
        }
        let token = &tokens[i];
        i += 1;
        let base = strip_possessive(token);
        if config.stopwords.contains(token.as_str())
            || base.chars().count() < config.min_token_length
            || config.removed_phrases.contains(base)
            || removed_stems.contains(&porter_stem(base))
        {
            continue;
        }
        out.push(token.clone());
    }
    out
}

/// Stem counts for one paragraph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StemBag {
    counts: BTreeMap<String, u32>,
}

impl StemBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, stem: impl Into<String>, count: u32) {
        if count > 0 {
            *self.counts.entry(stem.into()).or_insert(0) += count;
        }
    }

    pub fn get(&self, stem: &str) -> u32 {
        self.counts.get(stem).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn merge(&mut self, other: &StemBag) {
        for (stem, count) in other.iter() {
            self.add(stem, count);
        }
    }
}

impl<S: Into<String>> FromIterator<(S, u32)> for StemBag {
    fn from_iter<I: IntoIterator<Item = (S, u32)>>(iter: I) -> Self {
        let mut bag = StemBag::new();
        for (stem, count) in iter {
            bag.add(stem, count);
        }
        bag
    }
}

pub fn preprocess_for_topics(text: &str, config: &TokenFilterConfig) -> StemBag {
    preprocess_with_category_filter(text, config, &KeepAll)
}

pub fn preprocess_with_category_filter(
    text: &str,
    config: &TokenFilterConfig,
    category: &dyn TokenCategoryFilter,
) -> StemBag {
    let mut bag = StemBag::new();
    for token in filter_tokens(&tokenize(text), config) {
        if category.keep(&token) {
            bag.add(porter_stem(strip_possessive(&token)), 1);
        }
    }
    bag
}
