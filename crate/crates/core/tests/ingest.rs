use std::collections::HashMap;

use tension_core::ingest::{
    clean_artifacts, detect_language, extract_speaker, speaker_coverage, split_paragraphs, Actor,
    ActorLexicon, Convention, Ingestor, Language, LanguageDetector, Paragraph, ParagraphId,
    SessionKind, SessionRef, SplitProfile,
};
use tension_core::preprocess::porter_stem;

const PORTER_ORACLE: &str = include_str!("fixtures/porter_oracle.txt");
const PORTER_FIXED: &str = include_str!("fixtures/porter_fixed_points.txt");
const SPEAKERS: &str = include_str!("fixtures/speakers.tsv");
const EN_CORPUS: &str = include_str!("../data/lang/en.txt");
const FR_CORPUS: &str = include_str!("../data/lang/fr.txt");

const TABLE_EXAMPLE: &str = "The Chairperson:\n\"Thank you very much. Now, the floor goes to Norway.\"\nNorway:\n\"Thank you Chair. We support the suggestion made by Australia and Kuwait that we leave paragraph 5 as it was and insert the new paragraph 6 and paragraph 7 explains what the Committee wants the State Party to do.\"\nThe Chairperson:\n\"Thank you. I now give the floor to Spain.\"\n";

fn fixture_lines(source: &str) -> impl Iterator<Item = &str> {
    source
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[test]
fn porter_matches_reference_pairs() {
    let mut checked = 0;
    for line in fixture_lines(PORTER_ORACLE) {
        let (word, stem) = line.split_once(' ').expect("word stem");
        if word.chars().count() <= 2 {
            continue;
        }
        assert_eq!(porter_stem(word), stem, "stem of `{word}`");
        checked += 1;
    }
    assert!(checked >= 300, "only {checked} oracle pairs");
}

#[test]
fn porter_fixed_points_are_idempotent() {
    for word in fixture_lines(PORTER_FIXED) {
        let once = porter_stem(word);
        assert_eq!(porter_stem(&once), once, "`{word}`");
    }
}

#[test]
fn porter_known_non_fixed_points() {
    for (word, first, second) in [
        ("committee", "committe", "committ"),
        ("agreed", "agre", "agr"),
        ("decision", "decis", "deci"),
    ] {
        assert_eq!(porter_stem(word), first);
        assert_eq!(porter_stem(first), second);
    }
}

/// Independent language oracle: relative letter frequencies of the text
/// compared with those of each reference corpus by cosine similarity.
fn letter_profile(text: &str) -> HashMap<char, f64> {
    let mut counts = HashMap::new();
    let mut total = 0.0;
    for c in text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphabetic())
    {
        *counts.entry(c).or_insert(0.0) += 1.0;
        total += 1.0;
    }
    counts.values_mut().for_each(|v| *v /= total);
    counts
}

fn profile_cosine(a: &HashMap<char, f64>, b: &HashMap<char, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(k, v)| v * b.get(k).unwrap_or(&0.0)).sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn letter_oracle(text: &str) -> Language {
    let t = letter_profile(text);
    let en = profile_cosine(&t, &letter_profile(EN_CORPUS));
    let fr = profile_cosine(&t, &letter_profile(FR_CORPUS));
    if en >= fr {
        Language::En
    } else {
        Language::Fr
    }
}

#[test]
fn language_detector_agrees_with_letter_frequency_oracle() {
    let cases = [
        (
            "The delegation of India congratulated the Evaluation Body for the presentation",
            Language::En,
        ),
        (
            "La délégation remercie le Président pour son rapport détaillé",
            Language::Fr,
        ),
        (
            "The Committee decided to inscribe the property on the World Heritage List.",
            Language::En,
        ),
        (
            "Le Comité a décidé d'inscrire le bien sur la Liste du patrimoine mondial.",
            Language::Fr,
        ),
        (
            "The representative of IUCN recalled the threats posed by mining concessions.",
            Language::En,
        ),
        (
            "La délégation de la France a souligné l'importance de la zone tampon.",
            Language::Fr,
        ),
        (
            "The Rapporteur presented the draft decision as amended during the debate.",
            Language::En,
        ),
        (
            "Le Rapporteur a présenté le projet de décision tel qu'amendé pendant le débat.",
            Language::Fr,
        ),
    ];
    for (text, expected) in cases {
        assert_eq!(letter_oracle(text), expected, "oracle on `{text}`");
        assert_eq!(detect_language(text), expected, "detector on `{text}`");
    }
}

#[test]
fn third_languages_fall_below_the_floor() {
    let detector = LanguageDetector::bundled();
    for text in [
        "Die Delegation Deutschlands dankte dem Vorsitzenden für seinen ausführlichen Bericht.",
        "La delegación de España agradeció al Presidente su informe detallado sobre el sitio.",
    ] {
        assert_eq!(detector.detect(text), Language::Other, "`{text}`");
    }
}

#[test]
fn splitter_reproduces_extracted_paragraphs_table() {
    let profile = SplitProfile::builtin("modern").unwrap();
    let paragraphs = split_paragraphs(TABLE_EXAMPLE, &profile);
    let expected = [
        "The Chairperson: \"Thank you very much. Now, the floor goes to Norway.\"",
        "Norway: \"Thank you Chair. We support the suggestion made by Australia and Kuwait that we leave paragraph 5 as it was and insert the new paragraph 6 and paragraph 7 explains what the Committee wants the State Party to do.\"",
        "The Chairperson: \"Thank you. I now give the floor to Spain.\"",
    ];
    assert_eq!(paragraphs.len(), 3);
    for (p, want) in paragraphs.iter().zip(expected) {
        assert_eq!(normalize_ws(&p.raw_text), want);
        assert_eq!(&TABLE_EXAMPLE[p.span.clone()], p.raw_text);
    }
}

#[test]
fn cleaning_removes_page_rules() {
    assert_eq!(
        clean_artifacts("----- 42 -----\nThe Chairperson thanked"),
        "The Chairperson thanked"
    );
    assert_eq!(clean_artifacts("UNESCO"), "UNESCO");
}

fn parse_expected(label: &str) -> Option<Actor> {
    let (kind, name) = label.split_once(':')?;
    Some(match kind {
        "role" => Actor::role(name),
        "state" => Actor::state(name),
        "org" => Actor::organisation(name),
        other => panic!("bad kind {other}"),
    })
}

fn session() -> SessionRef {
    SessionRef {
        convention: Convention::Whc,
        number: 35,
        kind: SessionKind::Ordinary,
        year: 2011,
    }
}

#[test]
fn speaker_fixture_matches_hand_labels() {
    let lexicon = ActorLexicon::bundled();
    let mut paragraphs = Vec::new();
    for (i, line) in fixture_lines(SPEAKERS).enumerate() {
        let (label, text) = line.split_once('\t').expect("label<TAB>text");
        let got = extract_speaker(text, lexicon);
        assert_eq!(got, parse_expected(label), "line {}: {text}", i + 1);
        paragraphs.push(Paragraph {
            id: ParagraphId::for_content(&session(), text, 0),
            session: session(),
            ordinal: i as u32,
            raw_text: text.to_owned(),
            clean_text: text.to_owned(),
            language: Language::En,
            speaker: got,
            tension_score: None,
            topic_id: None,
        });
    }
    assert_eq!(paragraphs.len(), 20);
    assert!(speaker_coverage(&paragraphs) >= 0.70);
}

#[test]
fn ingest_pipeline_on_table_example() {
    let profile = SplitProfile::builtin("modern").unwrap();
    let ingestor = Ingestor {
        profile: &profile,
        lexicon: ActorLexicon::bundled(),
        detector: LanguageDetector::bundled(),
        translator: None,
    };
    let report = ingestor.ingest(&session(), TABLE_EXAMPLE);
    let speakers: Vec<Option<Actor>> = report
        .paragraphs
        .iter()
        .map(|p| p.speaker.clone())
        .collect();
    assert_eq!(
        speakers,
        vec![
            Some(Actor::role("Chairperson")),
            Some(Actor::state("Norway")),
            Some(Actor::role("Chairperson")),
        ]
    );
    assert!(report.paragraphs.iter().all(|p| p.language == Language::En));
    assert!(report
        .paragraphs
        .iter()
        .all(|p| p.id.as_str().starts_with("WHC-35:")));
    assert_eq!(ingestor.ingest(&session(), TABLE_EXAMPLE), report);
}
