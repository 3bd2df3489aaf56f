//! Rule-based speaker attribution.
//!
//! Every phrase that can name a speaker is located in the paragraph and the
//! earliest one wins; at equal start offsets the longer match wins. Phrases:
//!
//! * a role from the role lexicon (`the Chairperson`, `the Rapporteur`);
//! * an organisation acronym (`ICOMOS`, `the representative of IUCN`);
//! * `delegation of X`, `delegate of X`, `representative of X` for a country X;
//! * a demonym phrase (`the British representative`);
//! * a direct-speech speaker line opening with a country name (`Norway:`).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use super::{Actor, ActorKind, IngestError, Paragraph};

const ROLES: &str = include_str!("../../data/lexicon/roles.txt");
const ORGANISATIONS: &str = include_str!("../../data/lexicon/organisations.txt");
const COUNTRIES: &str = include_str!("../../data/lexicon/countries.txt");
const DEMONYMS: &str = include_str!("../../data/lexicon/demonyms.txt");

const ARTICLE: &str = r"(?:\b[Tt][Hh][Ee]\s+)?";

#[derive(Debug)]
struct Pattern {
    kind: ActorKind,
    regex: Regex,
    /// Surface form (as written in the lexicon) to canonical actor name.
    canonical: BTreeMap<String, String>,
}

/// Role names, organisation acronyms, country names with aliases, and the
/// demonym table, compiled into matching patterns.
#[derive(Debug)]
pub struct ActorLexicon {
    roles: Vec<String>,
    organisations: Vec<String>,
    countries: BTreeMap<String, String>,
    demonyms: BTreeMap<String, String>,
    patterns: Vec<Pattern>,
}

/// Parses a lexicon list: one entry per line, `#` comments, optional
/// `alias => canonical`.
fn parse_list(source: &str) -> Result<BTreeMap<String, String>, IngestError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (surface, canonical) = match line.split_once("=>") {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (line, line),
        };
        if surface.is_empty() || canonical.is_empty() {
            return Err(IngestError::Lexicon {
                line: idx + 1,
                message: format!("empty entry in `{line}`"),
            });
        }
        out.insert(surface.to_owned(), canonical.to_owned());
    }
    Ok(out)
}

/// Regex alternation of the given literals, longest first.
fn alternation<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    let mut items: Vec<&String> = items.into_iter().collect();
    items.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    items
        .iter()
        .map(|s| regex::escape(s))
        .collect::<Vec<_>>()
        .join("|")
}

impl ActorLexicon {
    pub fn from_sources(
        roles: &str,
        organisations: &str,
        countries: &str,
        demonyms: &str,
    ) -> Result<Self, IngestError> {
        let roles_map = parse_list(roles)?;
        let orgs_map = parse_list(organisations)?;
        let countries = parse_list(countries)?;
        let demonyms = parse_list(demonyms)?;

        let mut patterns = Vec::new();
        let build = |src: String| Regex::new(&src).expect("lexicon pattern compiles");
        if !roles_map.is_empty() {
            patterns.push(Pattern {
                kind: ActorKind::Role,
                regex: build(format!(
                    r"{ARTICLE}\b(?P<name>{})\b",
                    alternation(roles_map.keys())
                )),
                canonical: roles_map.clone(),
            });
        }
        if !orgs_map.is_empty() {
            patterns.push(Pattern {
                kind: ActorKind::Organisation,
                regex: build(format!(
                    r"{ARTICLE}(?:\b[Rr]epresentatives?\s+of\s+(?:the\s+)?)?\b(?P<name>{})\b",
                    alternation(orgs_map.keys())
                )),
                canonical: orgs_map.clone(),
            });
        }
        if !countries.is_empty() {
            let names = alternation(countries.keys());
            patterns.push(Pattern {
                kind: ActorKind::StateDelegation,
                regex: build(format!(
                    r"{ARTICLE}\b(?:[Dd]elegation|[Dd]elegate|[Rr]epresentative|[Oo]bserver)s?\s+(?:of|for|from)\s+(?:[Tt]he\s+)?(?P<name>{names})(?:\b|$)"
                )),
                canonical: countries.clone(),
            });
            patterns.push(Pattern {
                kind: ActorKind::StateDelegation,
                regex: build(format!(r"(?m)^[ \t]*{ARTICLE}(?P<name>{names})[ \t]*:")),
                canonical: countries.clone(),
            });
        }
        if !demonyms.is_empty() {
            patterns.push(Pattern {
                kind: ActorKind::StateDelegation,
                regex: build(format!(
                    r"{ARTICLE}\b(?P<name>{})\s+(?:[Dd]elegation|[Dd]elegates?|[Rr]epresentatives?|[Aa]mbassador)\b",
                    alternation(demonyms.keys())
                )),
                canonical: demonyms.clone(),
            });
        }

        Ok(ActorLexicon {
            roles: roles_map.into_values().collect(),
            organisations: orgs_map.into_values().collect(),
            countries,
            demonyms,
            patterns,
        })
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> &'static ActorLexicon {
        static LEXICON: OnceLock<ActorLexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            ActorLexicon::from_sources(ROLES, ORGANISATIONS, COUNTRIES, DEMONYMS)
                .expect("bundled lexicon is valid")
        })
    }

    /// Loads `roles.txt`, `organisations.txt`, `countries.txt` and
    /// `demonyms.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, IngestError> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Self::from_sources(
            &read("roles.txt")?,
            &read("organisations.txt")?,
            &read("countries.txt")?,
            &read("demonyms.txt")?,
        )
    }

    pub fn is_role(&self, name: &str) -> bool {
        self.roles.iter().any(|r| r == name)
    }

    pub fn organisations(&self) -> &[String] {
        &self.organisations
    }

    /// Country surface forms (including aliases) mapped to canonical names.
    pub fn countries(&self) -> &BTreeMap<String, String> {
        &self.countries
    }

    pub fn demonyms(&self) -> &BTreeMap<String, String> {
        &self.demonyms
    }
}

pub fn extract_speaker(text: &str, lexicon: &ActorLexicon) -> Option<Actor> {
    // (start, -len) ordering: earliest, then longest.
    let mut best: Option<(usize, usize, Actor)> = None;
    for pattern in &lexicon.patterns {
        if let Some(caps) = pattern.regex.captures(text) {
            let whole = caps.get(0).expect("group 0");
            let name = caps.name("name").expect("name group").as_str();
            let start = whole.start() + (whole.as_str().len() - whole.as_str().trim_start().len());
            let len = whole.end() - start;
            let better = match &best {
                None => true,
                Some((s, l, _)) => start < *s || (start == *s && len > *l),
            };
            if better {
                let canonical = pattern
                    .canonical
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| name.to_owned());
                best = Some((
                    start,
                    len,
                    Actor {
                        kind: pattern.kind,
                        name: canonical,
                    },
                ));
            }
        }
    }
    best.map(|(_, _, actor)| actor)
}

/// Share of paragraphs with an attributed speaker; 0 for no paragraphs.
pub fn speaker_coverage(paragraphs: &[Paragraph]) -> f64 {
    if paragraphs.is_empty() {
        return 0.0;
    }
    let with = paragraphs.iter().filter(|p| p.speaker.is_some()).count();
    with as f64 / paragraphs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speaker(text: &str) -> Option<Actor> {
        extract_speaker(text, ActorLexicon::bundled())
    }

    #[test]
    fn delegation_of_country() {
        assert_eq!(
            speaker("The delegation of India congratulated the Evaluation Body..."),
            Some(Actor::state("India"))
        );
        assert_eq!(
            speaker("the Delegate of the Netherlands asked for clarification."),
            Some(Actor::state("Netherlands"))
        );
    }

    #[test]
    fn role_speaker_line() {
        assert_eq!(
            speaker("The Chairperson: Thank you very much."),
            Some(Actor::role("Chairperson"))
        );
    }

    #[test]
    fn first_occurrence_wins() {
        assert_eq!(
            speaker("The Chairperson gave the floor to the delegation of Norway."),
            Some(Actor::role("Chairperson"))
        );
        assert_eq!(
            speaker("Responding to the Chairperson, the delegation of Norway"),
            Some(Actor::role("Chairperson"))
        );
    }

    #[test]
    fn no_speaker_phrase() {
        assert_eq!(speaker("Several amendments were then read aloud."), None);
        assert_eq!(
            speaker("We support the suggestion made by Australia."),
            None
        );
    }

    #[test]
    fn longer_match_at_same_offset() {
        assert_eq!(
            speaker("The Vice-Chairperson thanked the Committee."),
            Some(Actor::role("Vice-Chairperson"))
        );
        assert_eq!(
            speaker("The delegation of the United Republic of Tanzania disagreed."),
            Some(Actor::state("United Republic of Tanzania"))
        );
        assert_eq!(
            speaker("The delegation of Guinea-Bissau disagreed."),
            Some(Actor::state("Guinea-Bissau"))
        );
    }

    #[test]
    fn aliases_and_demonyms() {
        assert_eq!(
            speaker("The British representative expressed concern."),
            Some(Actor::state("United Kingdom"))
        );
        assert_eq!(
            speaker("The delegation of Türkiye objected."),
            Some(Actor::state("Turkey"))
        );
        assert_eq!(
            speaker("The Delegation of the USSR proposed an amendment."),
            Some(Actor::state("Union of Soviet Socialist Republics"))
        );
    }

    #[test]
    fn organisations() {
        assert_eq!(
            speaker("ICOMOS explained that the property did not meet the conditions."),
            Some(Actor::organisation("ICOMOS"))
        );
        assert_eq!(
            speaker("The representative of IUCN noted the threats."),
            Some(Actor::organisation("IUCN"))
        );
    }

    #[test]
    fn country_speaker_line() {
        assert_eq!(
            speaker("Norway:\n\"Thank you Chair. We support the suggestion made by Australia\""),
            Some(Actor::state("Norway"))
        );
        // a bare country name mid-sentence is not a speaker
        assert_eq!(speaker("Thank you. Norway has the floor"), None);
    }

    #[test]
    fn roles_are_lexicon_only() {
        let lex = ActorLexicon::bundled();
        assert!(lex.is_role("Chairperson"));
        assert!(lex.is_role("Rapporteur"));
        assert!(!lex.is_role("Norway"));
    }

    #[test]
    fn custom_lexicon() {
        let lex = ActorLexicon::from_sources("Moderator\n", "WCS\n", "Atlantis\n", "").unwrap();
        assert_eq!(
            extract_speaker("The delegate of Atlantis spoke before the Moderator.", &lex),
            Some(Actor::state("Atlantis"))
        );
        assert_eq!(
            extract_speaker("WCS noted the point.", &lex),
            Some(Actor::organisation("WCS"))
        );
        assert!(ActorLexicon::from_sources("=> x\n", "", "", "").is_err());
    }
}
