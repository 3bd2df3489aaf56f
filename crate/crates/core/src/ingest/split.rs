//! Rule-driven paragraph segmentation.
//!
//! A [`SplitProfile`] is a named, versioned list of line patterns loaded from
//! a rule file. Segmentation walks the document line by line:
//!
//! * blank lines are vertical breaks;
//! * `discard` lines (page numbers, rulings, running headers) never open or
//!   close a paragraph;
//! * `speaker` and `bullet` lines always open a new paragraph;
//! * after a vertical break a `start` line opens a new paragraph, unless the
//!   previous content line matches a `hold` pattern (the break was a page
//!   ending in the middle of a sentence).

use std::ops::Range;
use std::path::Path;

use regex::Regex;

use super::IngestError;

const MODERN_RULES: &str = include_str!("../../data/profiles/modern.rules");
const REPORTED_RULES: &str = include_str!("../../data/profiles/reported.rules");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Discard,
    Speaker,
    Bullet,
    Start,
    Hold,
}

impl RuleKind {
    fn parse(word: &str) -> Option<Self> {
        Some(match word {
            "discard" => RuleKind::Discard,
            "speaker" => RuleKind::Speaker,
            "bullet" => RuleKind::Bullet,
            "start" => RuleKind::Start,
            "hold" => RuleKind::Hold,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SplitProfile {
    pub name: String,
    pub version: u32,
    rules: Vec<(RuleKind, Regex)>,
}

impl SplitProfile {
    /// Parses the rule-file format: `@name`/`@version` headers, then one
    /// `<directive> <regex>` per line; `#` starts a comment line.
    pub fn parse(source: &str) -> Result<Self, IngestError> {
        let mut name = None;
        let mut version = None;
        let mut rules = Vec::new();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| IngestError::Rule {
                line: line_no,
                message,
            };
            let (head, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| err(format!("expected `<directive> <pattern>`, got `{line}`")))?;
            let rest = rest.trim();
            match head {
                "@name" => name = Some(rest.to_owned()),
                "@version" => {
                    version = Some(
                        rest.parse()
                            .map_err(|_| err(format!("bad version `{rest}`")))?,
                    )
                }
                _ => {
                    let kind = RuleKind::parse(head)
                        .ok_or_else(|| err(format!("unknown directive `{head}`")))?;
                    let re = Regex::new(rest).map_err(|e| err(e.to_string()))?;
                    rules.push((kind, re));
                }
            }
        }
        Ok(SplitProfile {
            name: name.ok_or(IngestError::Rule {
                line: 0,
                message: "missing @name".into(),
            })?,
            version: version.unwrap_or(1),
            rules,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The shipped profiles: `modern` (direct speech with speaker lines) and
    /// `reported` (numbered third-person paragraphs).
    pub fn builtin(name: &str) -> Result<Self, IngestError> {
        match name {
            "modern" => Self::parse(MODERN_RULES),
            "reported" => Self::parse(REPORTED_RULES),
            other => Err(IngestError::UnknownProfile(other.to_owned())),
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["modern", "reported"]
    }

    fn any(&self, kind: RuleKind, line: &str) -> bool {
        self.rules
            .iter()
            .any(|(k, re)| *k == kind && re.is_match(line))
    }

    pub fn rule_count(&self, kind: RuleKind) -> usize {
        self.rules.iter().filter(|(k, _)| *k == kind).count()
    }
}

/// A paragraph before cleaning and attribution. `span` is the byte range of
/// `raw_text` in the source document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParagraphDraft {
    pub ordinal: usize,
    pub span: Range<usize>,
    pub raw_text: String,
}

pub fn split_paragraphs(document: &str, profile: &SplitProfile) -> Vec<ParagraphDraft> {
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut current: Option<Range<usize>> = None;
    let mut last_content = "";
    let mut after_break = false;

    let mut offset = 0;
    for piece in document.split_inclusive('\n') {
        let line_start = offset;
        offset += piece.len();
        let line = piece.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            after_break = true;
            continue;
        }
        if profile.any(RuleKind::Discard, line) {
            continue;
        }
        let indent = line.len() - line.trim_start().len();
        let content = line_start + indent..line_start + line.trim_end().len();
        let opens = match current {
            None => true,
            Some(_) => {
                profile.any(RuleKind::Speaker, line)
                    || profile.any(RuleKind::Bullet, line)
                    || (after_break
                        && profile.any(RuleKind::Start, line)
                        && !profile.any(RuleKind::Hold, last_content))
            }
        };
        if opens {
            if let Some(done) = current.take() {
                spans.push(done);
            }
            current = Some(content.clone());
        } else if let Some(cur) = current.as_mut() {
            cur.end = content.end;
        }
        last_content = &document[content];
        after_break = false;
    }
    if let Some(done) = current {
        spans.push(done);
    }

    spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| ParagraphDraft {
            ordinal,
            raw_text: document[span.clone()].to_owned(),
            span,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modern() -> SplitProfile {
        SplitProfile::builtin("modern").unwrap()
    }

    fn reported() -> SplitProfile {
        SplitProfile::builtin("reported").unwrap()
    }

    fn texts(drafts: &[ParagraphDraft]) -> Vec<&str> {
        drafts.iter().map(|d| d.raw_text.as_str()).collect()
    }

    #[test]
    fn builtin_profiles_parse() {
        for name in SplitProfile::builtin_names() {
            let p = SplitProfile::builtin(name).unwrap();
            assert_eq!(&p.name, name);
            assert_eq!(p.version, 1);
            assert!(p.rule_count(RuleKind::Start) >= 1);
            assert!(p.rule_count(RuleKind::Discard) >= 1);
        }
        assert!(matches!(
            SplitProfile::builtin("medieval"),
            Err(IngestError::UnknownProfile(_))
        ));
    }

    #[test]
    fn rule_file_errors_carry_line_numbers() {
        let err = SplitProfile::parse("@name x\n# fine\nsplit ^a\n").unwrap_err();
        assert!(matches!(err, IngestError::Rule { line: 3, .. }));
        let err = SplitProfile::parse("@name x\nstart (unclosed\n").unwrap_err();
        assert!(matches!(err, IngestError::Rule { line: 2, .. }));
        assert!(SplitProfile::parse("start ^A\n").is_err());
    }

    #[test]
    fn empty_document_yields_nothing() {
        assert!(split_paragraphs("", &modern()).is_empty());
        assert!(split_paragraphs("\n\n  \n", &modern()).is_empty());
    }

    #[test]
    fn single_block_is_one_paragraph() {
        let doc = "The Committee examined the report and adopted the decision without debate";
        let drafts = split_paragraphs(doc, &modern());
        assert_eq!(texts(&drafts), vec![doc]);
    }

    #[test]
    fn blank_lines_split_sentences() {
        let doc = "The session opened at 10 a.m.\n\nThe Rapporteur presented the report.\n";
        let drafts = split_paragraphs(doc, &reported());
        assert_eq!(
            texts(&drafts),
            vec![
                "The session opened at 10 a.m.",
                "The Rapporteur presented the report."
            ]
        );
    }

    #[test]
    fn page_ending_does_not_split() {
        let doc = "The delegation of Peru recalled that the\n\n- 12 -\n\nCommittee had already examined the file.\n\nThe Chairperson thanked Peru.";
        let drafts = split_paragraphs(doc, &reported());
        assert_eq!(drafts.len(), 2);
        assert!(drafts[0].raw_text.starts_with("The delegation of Peru"));
        assert!(drafts[0].raw_text.ends_with("examined the file."));
        assert_eq!(drafts[1].raw_text, "The Chairperson thanked Peru.");
    }

    #[test]
    fn wrapped_lines_stay_together_without_break() {
        let doc = "The delegation of Peru recalled that\nCommittee members had examined the file.";
        assert_eq!(split_paragraphs(doc, &reported()).len(), 1);
    }

    #[test]
    fn numbered_paragraphs_split_in_reported_profile() {
        let doc = "12. The Delegation of India congratulated the Body.\n13. The Delegation of Spain agreed.";
        let drafts = split_paragraphs(doc, &reported());
        assert_eq!(drafts.len(), 2);
        assert!(drafts[1]
            .raw_text
            .starts_with("13. The Delegation of Spain"));
    }

    #[test]
    fn bullets_split() {
        let doc = "The Secretariat listed the criteria:\n• authenticity of the property;\n• integrity of the buffer zone.";
        let drafts = split_paragraphs(doc, &modern());
        assert_eq!(drafts.len(), 3);
        assert_eq!(drafts[2].raw_text, "• integrity of the buffer zone.");
    }

    #[test]
    fn leading_discards_are_outside_spans() {
        let doc = "-----\n  42\nThe Chairperson opened the session.";
        let drafts = split_paragraphs(doc, &modern());
        assert_eq!(texts(&drafts), vec!["The Chairperson opened the session."]);
        assert_eq!(&doc[drafts[0].span.clone()], drafts[0].raw_text);
    }

    #[test]
    fn table_example_splits_at_speaker_lines() {
        let doc = "The Chairperson:\n\"Thank you very much. Now, the floor goes to Norway.\"\nNorway:\n\"Thank you Chair.\"\nThe Chairperson:\n\"Thank you. I now give the floor to Spain.\"";
        let drafts = split_paragraphs(doc, &modern());
        assert_eq!(drafts.len(), 3);
        assert!(drafts[1].raw_text.starts_with("Norway:"));
        assert_eq!(
            drafts.iter().map(|d| d.ordinal).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn crlf_input() {
        let doc = "The Chairperson:\r\n\"Thank you.\"\r\nNorway:\r\n\"We agree.\"\r\n";
        let drafts = split_paragraphs(doc, &modern());
        assert_eq!(
            texts(&drafts),
            vec![
                "The Chairperson:\r\n\"Thank you.\"",
                "Norway:\r\n\"We agree.\""
            ]
        );
    }
}
