use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::ingest::{Language, Paragraph};

/// Conjunction of filters. Within `sessions` and `actors` any listed value
/// matches; an empty list does not filter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    /// Session labels such as `WHC-35`.
    pub sessions: Vec<String>,
    /// Actor names, compared case-insensitively.
    pub actors: Vec<String>,
    pub language: Option<Language>,
    /// Whether the paragraph has an effective label.
    pub labelled: Option<bool>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryOrder {
    Tension,
    #[default]
    Date,
}

impl FromStr for QueryOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tension" => Ok(QueryOrder::Tension),
            "date" => Ok(QueryOrder::Date),
            other => Err(format!("order must be `tension` or `date`, got `{other}`")),
        }
    }
}

fn date_order(a: &Paragraph, b: &Paragraph) -> Ordering {
    a.session
        .year
        .cmp(&b.session.year)
        .then_with(|| a.session.cmp(&b.session))
        .then(a.ordinal.cmp(&b.ordinal))
        .then_with(|| a.id.cmp(&b.id))
}

fn tension_order(a: &Paragraph, b: &Paragraph) -> Ordering {
    match (a.tension_score, b.tension_score) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then_with(|| date_order(a, b))
}

impl Corpus {
    /// Filters, orders, then truncates to `limit`. Ties under tension order
    /// fall back to date order.
    pub fn query(&self, filter: &QueryFilter, order: QueryOrder, limit: usize) -> Vec<&Paragraph> {
        let labelled = filter.labelled.map(|want| (want, self.effective_labels()));
        let actors: Vec<String> = filter.actors.iter().map(|a| a.to_lowercase()).collect();
        let mut hits: Vec<&Paragraph> = self
            .paragraphs
            .iter()
            .filter(|p| {
                filter.sessions.is_empty()
                    || filter.sessions.iter().any(|s| *s == p.session.label())
            })
            .filter(|p| {
                actors.is_empty()
                    || p.speaker
                        .as_ref()
                        .is_some_and(|a| actors.contains(&a.name.to_lowercase()))
            })
            .filter(|p| filter.language.is_none_or(|l| p.language == l))
            .filter(|p| match &labelled {
                Some((want, labels)) => labels.contains_key(&p.id) == *want,
                None => true,
            })
            .collect();
        match order {
            QueryOrder::Tension => hits.sort_by(|a, b| tension_order(a, b)),
            QueryOrder::Date => hits.sort_by(|a, b| date_order(a, b)),
        }
        hits.truncate(limit);
        hits
    }
}
