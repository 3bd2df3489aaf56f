//! Transcript ingestion: paragraph segmentation, artefact cleaning, language
//! tagging and speaker attribution.

mod clean;
mod language;
mod session;
mod speaker;
mod split;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clean::clean_artifacts;
pub use language::{detect_language, LanguageDetector, LanguageScores, CONFIDENCE_FLOOR};
pub use session::{parse_session_file_name, Convention, SessionKind, SessionRef};
pub use speaker::{extract_speaker, speaker_coverage, ActorLexicon};
pub use split::{split_paragraphs, ParagraphDraft, RuleKind, SplitProfile};

use crate::hashing::sha256_hex;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document is not valid UTF-8 (first invalid byte at offset {offset})")]
    Decode { offset: usize },
    #[error("rule file line {line}: {message}")]
    Rule { line: usize, message: String },
    #[error("unknown split profile `{0}`")]
    UnknownProfile(String),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("invalid session file name `{name}`: {reason}")]
    SessionName { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Decodes raw document bytes. A leading byte-order mark is dropped.
pub fn decode_document(bytes: &[u8]) -> Result<String, IngestError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    match std::str::from_utf8(bytes) {
        Ok(text) => Ok(text.to_owned()),
        Err(err) => Err(IngestError::Decode {
            offset: err.valid_up_to(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    En,
    Fr,
    Other,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorKind {
    Role,
    StateDelegation,
    Organisation,
}

/// A speaker: a role such as the Chairperson, a state delegation, or a named
/// organisation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub name: String,
}

impl Actor {
    pub fn role(name: impl Into<String>) -> Self {
        Actor {
            kind: ActorKind::Role,
            name: name.into(),
        }
    }

    pub fn state(name: impl Into<String>) -> Self {
        Actor {
            kind: ActorKind::StateDelegation,
            name: name.into(),
        }
    }

    pub fn organisation(name: impl Into<String>) -> Self {
        Actor {
            kind: ActorKind::Organisation,
            name: name.into(),
        }
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActorKind::StateDelegation => write!(f, "Delegation of {}", self.name),
            ActorKind::Role | ActorKind::Organisation => f.write_str(&self.name),
        }
    }
}

/// Paragraph identifier: the session label followed by a content hash, e.g.
/// `WHC-35:3f9a0c1d22e4b870`. Stable across re-ingestion of identical text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParagraphId(String);

impl ParagraphId {
    pub fn new(id: impl Into<String>) -> Self {
        ParagraphId(id.into())
    }

    /// Id for the `occurrence`-th paragraph (zero-based) with this exact text
    /// in the session.
    pub fn for_content(session: &SessionRef, raw_text: &str, occurrence: usize) -> Self {
        let digest = sha256_hex(raw_text.as_bytes());
        let mut id = format!("{}:{}", session.label(), &digest[..16]);
        if occurrence > 0 {
            id.push_str(&format!("-{}", occurrence + 1));
        }
        ParagraphId(id)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParagraphId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ParagraphId {
    fn from(s: &str) -> Self {
        ParagraphId(s.to_owned())
    }
}

/// One transcript unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: ParagraphId,
    pub session: SessionRef,
    pub ordinal: u32,
    pub raw_text: String,
    pub clean_text: String,
    pub language: Language,
    pub speaker: Option<Actor>,
    pub tension_score: Option<f64>,
    pub topic_id: Option<u32>,
}

/// Translation hook for French paragraphs. Implementations call an external
/// service; the pipeline itself never translates.
pub trait Translator {
    fn translate_to_english(&self, text: &str) -> Result<String, String>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub paragraphs: Vec<Paragraph>,
    /// Drafts dropped because cleaning left nothing or the language was
    /// neither English nor French.
    pub excluded: usize,
}

/// Everything the pipeline needs besides the document itself.
pub struct Ingestor<'a> {
    pub profile: &'a SplitProfile,
    pub lexicon: &'a ActorLexicon,
    pub detector: &'a LanguageDetector,
    pub translator: Option<&'a dyn Translator>,
}

impl Ingestor<'_> {
    /// Split, clean, tag and attribute one session document. Paragraphs whose
    /// language is `Other` are dropped; ordinals count the kept paragraphs.
    pub fn ingest(&self, session: &SessionRef, document: &str) -> IngestReport {
        let mut report = IngestReport::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for draft in split_paragraphs(document, self.profile) {
            let mut clean_text = clean_artifacts(&draft.raw_text);
            if clean_text.is_empty() {
                report.excluded += 1;
                continue;
            }
            let language = self.detector.detect(&clean_text);
            if language == Language::Other {
                report.excluded += 1;
                continue;
            }
            let speaker = extract_speaker(&clean_text, self.lexicon);
            if language == Language::Fr {
                if let Some(translator) = self.translator {
                    if let Ok(translated) = translator.translate_to_english(&clean_text) {
                        clean_text = translated;
                    }
                }
            }
            let occurrence = seen.entry(draft.raw_text.clone()).or_insert(0);
            let id = ParagraphId::for_content(session, &draft.raw_text, *occurrence);
            *occurrence += 1;
            report.paragraphs.push(Paragraph {
                id,
                session: session.clone(),
                ordinal: report.paragraphs.len() as u32,
                raw_text: draft.raw_text,
                clean_text,
                language,
                speaker,
                tension_score: None,
                topic_id: None,
            });
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_EXAMPLE: &str = "The Chairperson:\n\"Thank you very much. Now, the floor goes to Norway.\"\nNorway:\n\"Thank you Chair. We support the suggestion made by Australia and Kuwait that we leave paragraph 5 as it was and insert the new paragraph 6 and paragraph 7 explains what the Committee wants the State Party to do.\"\nThe Chairperson:\n\"Thank you. I now give the floor to Spain.\"\n";

    fn session() -> SessionRef {
        SessionRef::new(Convention::Whc, 35, SessionKind::Ordinary, 2011).unwrap()
    }

    #[test]
    fn decode_rejects_invalid_utf8() {
        let err = decode_document(b"ab\xffcd").unwrap_err();
        assert!(matches!(err, IngestError::Decode { offset: 2 }));
        assert_eq!(decode_document(b"\xEF\xBB\xBFhi").unwrap(), "hi");
    }

    #[test]
    fn pipeline_attributes_table_example() {
        let profile = SplitProfile::builtin("modern").unwrap();
        let lexicon = ActorLexicon::bundled();
        let ingestor = Ingestor {
            profile: &profile,
            lexicon,
            detector: LanguageDetector::bundled(),
            translator: None,
        };
        let report = ingestor.ingest(&session(), TABLE_EXAMPLE);
        assert_eq!(report.excluded, 0);
        let speakers: Vec<_> = report
            .paragraphs
            .iter()
            .map(|p| p.speaker.clone().unwrap())
            .collect();
        assert_eq!(
            speakers,
            vec![
                Actor::role("Chairperson"),
                Actor::state("Norway"),
                Actor::role("Chairperson")
            ]
        );
        assert!(report.paragraphs.iter().all(|p| p.language == Language::En));
        let ordinals: Vec<u32> = report.paragraphs.iter().map(|p| p.ordinal).collect();
        assert_eq!(ordinals, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_text_gets_distinct_ids() {
        let s = session();
        let a = ParagraphId::for_content(&s, "Thank you.", 0);
        let b = ParagraphId::for_content(&s, "Thank you.", 1);
        assert_ne!(a, b);
        assert!(a.as_str().starts_with("WHC-35:"));
        assert_eq!(a, ParagraphId::for_content(&s, "Thank you.", 0));
    }

    struct Upper;
    impl Translator for Upper {
        fn translate_to_english(&self, text: &str) -> Result<String, String> {
            Ok(format!("[en] {text}"))
        }
    }

    #[test]
    fn translator_rewrites_french_clean_text_only() {
        let profile = SplitProfile::builtin("reported").unwrap();
        let lexicon = ActorLexicon::bundled();
        let ingestor = Ingestor {
            profile: &profile,
            lexicon,
            detector: LanguageDetector::bundled(),
            translator: Some(&Upper),
        };
        let doc = "La délégation de la France a remercié le Comité pour son rapport détaillé et pour le travail accompli.\n\nThe delegation of India congratulated the Evaluation Body for the presentation of its report.";
        let report = ingestor.ingest(&session(), doc);
        assert_eq!(report.paragraphs.len(), 2);
        let fr = &report.paragraphs[0];
        assert_eq!(fr.language, Language::Fr);
        assert!(fr.clean_text.starts_with("[en] "));
        assert!(fr.raw_text.starts_with("La délégation"));
        assert!(!report.paragraphs[1].clean_text.starts_with("[en]"));
    }
}
