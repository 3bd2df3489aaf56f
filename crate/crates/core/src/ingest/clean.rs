//! Removal of layout residue left by text extraction.
//!
//! Lines without a single letter (page numbers, table rulings) are dropped,
//! runs of repeated rule characters are blanked, and whitespace-separated
//! clusters made only of stray glyphs are removed. Letter sequences are never
//! touched: there is no spelling correction.

use std::sync::OnceLock;

use regex::Regex;

fn rule_runs() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"-{3,}|={3,}|_{3,}|\*{3,}|~{3,}|#{3,}|\|{2,}|\+{3,}|·{3,}|•{2,}|\.{4,}|–{2,}|—{2,}",
        )
        .unwrap()
    })
}

/// Punctuation that can legitimately stand alone between words.
fn is_ordinary_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ','
            | ';'
            | ':'
            | '!'
            | '?'
            | '\''
            | '"'
            | '“'
            | '”'
            | '‘'
            | '’'
            | '('
            | ')'
            | '['
            | ']'
            | '-'
            | '–'
            | '—'
            | '&'
            | '%'
            | '/'
            | '«'
            | '»'
    )
}

fn is_glyph_cluster(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric) && !token.chars().all(is_ordinary_punct)
}

pub fn clean_artifacts(raw_text: &str) -> String {
    let mut lines = Vec::new();
    for line in raw_text.lines() {
        if !line.chars().any(char::is_alphabetic) {
            continue;
        }
        let line = rule_runs().replace_all(line, " ");
        let kept: Vec<&str> = line
            .split_whitespace()
            .filter(|tok| !is_glyph_cluster(tok))
            .collect();
        if !kept.is_empty() {
            lines.push(kept.join(" "));
        }
    }
    lines.join("\n")
}
