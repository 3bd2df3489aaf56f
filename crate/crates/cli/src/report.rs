use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use tension_core::ingest::SessionRef;
use tension_core::store::Corpus;

pub const ALL_SESSIONS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub session: String,
    pub paragraphs: usize,
    pub with_speaker: usize,
    pub coverage: f64,
}

/// Effective labels per session; `all` sums every session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub session: String,
    pub negative: usize,
    pub positive: usize,
    pub total: usize,
}

pub fn coverage_rows(corpus: &Corpus) -> Vec<CoverageRow> {
    let mut by_session: BTreeMap<&SessionRef, (usize, usize)> = BTreeMap::new();
    for p in &corpus.paragraphs {
        let e = by_session.entry(&p.session).or_default();
        e.0 += 1;
        e.1 += usize::from(p.speaker.is_some());
    }
    by_session
        .into_iter()
        .map(|(s, (n, with))| CoverageRow {
            session: s.label(),
            paragraphs: n,
            with_speaker: with,
            coverage: with as f64 / n as f64,
        })
        .collect()
}

pub fn balance_rows(corpus: &Corpus) -> Vec<BalanceRow> {
    let labels = corpus.effective_labels();
    let mut by_session: BTreeMap<&SessionRef, [usize; 2]> = BTreeMap::new();
    for p in &corpus.paragraphs {
        let counts = by_session.entry(&p.session).or_default();
        if let Some(&v) = labels.get(&p.id) {
            counts[usize::from(v)] += 1;
        }
    }
    let mut rows: Vec<BalanceRow> = by_session
        .iter()
        .map(|(s, [neg, pos])| BalanceRow {
            session: s.label(),
            negative: *neg,
            positive: *pos,
            total: neg + pos,
        })
        .collect();
    let (neg, pos) = rows
        .iter()
        .fold((0, 0), |(n, p), r| (n + r.negative, p + r.positive));
    rows.push(BalanceRow {
        session: ALL_SESSIONS.into(),
        negative: neg,
        positive: pos,
        total: neg + pos,
    });
    rows
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn coverage_text(rows: &[CoverageRow]) -> String {
    let mut out = format!(
        "{:<12} {:>10} {:>12} {:>9}\n",
        "session", "paragraphs", "with_speaker", "coverage"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>12} {:>9.4}",
            r.session, r.paragraphs, r.with_speaker, r.coverage
        );
    }
    out
}

pub fn balance_text(rows: &[BalanceRow]) -> String {
    let mut out = format!("{:<12} {:>8} {:>8} {:>8}\n", "session", "0s", "1s", "total");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            r.session, r.negative, r.positive, r.total
        );
    }
    out
}
