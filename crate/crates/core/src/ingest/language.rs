//! Character-trigram language identification for English and French.
//!
//! Each language profile is the rank-ordered list of the most frequent
//! trigrams in a bundled reference corpus. A text scores, per language, the
//! share of its trigram occurrences that appear in that profile. The best
//! language wins when its share reaches [`CONFIDENCE_FLOOR`]; otherwise the
//! text is `Other` (OCR noise, tables, a third language).

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use super::Language;

pub const CONFIDENCE_FLOOR: f64 = 0.65;
/// Trigrams kept per language profile.
pub const PROFILE_SIZE: usize = 500;

const EN_CORPUS: &str = include_str!("../../data/lang/en.txt");
const FR_CORPUS: &str = include_str!("../../data/lang/fr.txt");

/// Word-bounded character trigrams: lowercase, anything that is not a letter
/// acts as a separator, and every word is padded with one space on each side.
pub fn trigrams(text: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    let lowered = text.to_lowercase();
    for word in lowered.split(|c: char| !c.is_alphabetic()) {
        if word.is_empty() {
            continue;
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(word.chars())
            .chain(std::iter::once(' '))
            .collect();
        for window in padded.windows(3) {
            *counts.entry(window.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone)]
struct Profile {
    language: Language,
    ranked: Vec<String>,
    members: HashSet<String>,
}

impl Profile {
    fn from_corpus(language: Language, corpus: &str, size: usize) -> Self {
        let mut counted: Vec<(String, usize)> = trigrams(corpus).into_iter().collect();
        counted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        counted.truncate(size);
        let ranked: Vec<String> = counted.into_iter().map(|(g, _)| g).collect();
        Profile {
            language,
            members: ranked.iter().cloned().collect(),
            ranked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanguageScores {
    pub en: f64,
    pub fr: f64,
}

#[derive(Debug, Clone)]
pub struct LanguageDetector {
    profiles: Vec<Profile>,
    floor: f64,
}

impl LanguageDetector {
    pub fn from_corpora(english: &str, french: &str, profile_size: usize, floor: f64) -> Self {
        LanguageDetector {
            profiles: vec![
                Profile::from_corpus(Language::En, english, profile_size),
                Profile::from_corpus(Language::Fr, french, profile_size),
            ],
            floor,
        }
    }

    /// Detector built from the bundled reference corpora.
    pub fn bundled() -> &'static LanguageDetector {
        static DETECTOR: OnceLock<LanguageDetector> = OnceLock::new();
        DETECTOR.get_or_init(|| {
            LanguageDetector::from_corpora(EN_CORPUS, FR_CORPUS, PROFILE_SIZE, CONFIDENCE_FLOOR)
        })
    }

    pub fn profile(&self, language: Language) -> Option<&[String]> {
        self.profiles
            .iter()
            .find(|p| p.language == language)
            .map(|p| p.ranked.as_slice())
    }

    pub fn scores(&self, text: &str) -> LanguageScores {
        let grams = trigrams(text);
        let total: usize = grams.values().sum();
        let share = |language| {
            if total == 0 {
                return 0.0;
            }
            let profile = self
                .profiles
                .iter()
                .find(|p| p.language == language)
                .expect("profile present");
            let hits: usize = grams
                .iter()
                .filter(|(g, _)| profile.members.contains(*g))
                .map(|(_, n)| n)
                .sum();
            hits as f64 / total as f64
        };
        LanguageScores {
            en: share(Language::En),
            fr: share(Language::Fr),
        }
    }

    pub fn detect(&self, text: &str) -> Language {
        let LanguageScores { en, fr } = self.scores(text);
        let (best, score) = if fr > en {
            (Language::Fr, fr)
        } else {
            (Language::En, en)
        };
        if score >= self.floor {
            best
        } else {
            Language::Other
        }
    }
}

pub fn detect_language(text: &str) -> Language {
    LanguageDetector::bundled().detect(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn detects_english_and_french() {
        assert_eq!(
            detect_language(
                "The delegation of India congratulated the Evaluation Body for the presentation"
            ),
            Language::En
        );
        assert_eq!(
            detect_language("La délégation remercie le Président pour son rapport détaillé"),
            Language::Fr
        );
    }

    #[test]
    fn non_alphabetic_is_other() {
        assert_eq!(detect_language("%%% 12 34 --- ###"), Language::Other);
        assert_eq!(detect_language(""), Language::Other);
    }

    #[test]
    fn third_languages_fall_below_the_floor() {
        assert_eq!(
            detect_language(
                "Die Delegation dankt dem Vorsitzenden für seinen ausführlichen Bericht"
            ),
            Language::Other
        );
        assert_eq!(detect_language("xqz vvk ttr lpp"), Language::Other);
    }

    #[test]
    fn trigram_padding() {
        let g = trigrams("Ab, c");
        assert_eq!(g.get(" ab"), Some(&1));
        assert_eq!(g.get("ab "), Some(&1));
        assert_eq!(g.get(" c "), Some(&1));
        assert_eq!(g.len(), 3);
    }

    #[test]
    fn profiles_are_full_size() {
        let d = LanguageDetector::bundled();
        assert_eq!(d.profile(Language::En).unwrap().len(), PROFILE_SIZE);
        assert_eq!(d.profile(Language::Fr).unwrap().len(), PROFILE_SIZE);
        assert!(d.profile(Language::Other).is_none());
    }

    proptest! {
        #[test]
        fn digits_and_punctuation_are_other(s in "[0-9 .,;:!?%#()\\-]{0,64}") {
            prop_assert_eq!(detect_language(&s), Language::Other);
        }

        #[test]
        fn scores_are_shares(s in "\\PC{0,80}") {
            let sc = LanguageDetector::bundled().scores(&s);
            prop_assert!((0.0..=1.0).contains(&sc.en));
            prop_assert!((0.0..=1.0).contains(&sc.fr));
        }
    }
}
