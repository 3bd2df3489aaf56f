//! The Porter (1980) suffix-stripping stemmer, original rule set.
//!
//! Words of one or two letters are returned unchanged.

struct Word {
    chars: Vec<char>,
}

impl Word {
    fn is_consonant(&self, i: usize) -> bool {
        match self.chars[i] {
            'a' | 'e' | 'i' | 'o' | 'u' => false,
            'y' => i == 0 || !self.is_consonant(i - 1),
            _ => true,
        }
    }

    /// m in [C](VC)^m[V] for the first `len` letters.
    fn measure(&self, len: usize) -> usize {
        let mut m = 0;
        let mut i = 0;
        while i < len && self.is_consonant(i) {
            i += 1;
        }
        loop {
            while i < len && !self.is_consonant(i) {
                i += 1;
            }
            if i >= len {
                return m;
            }
            while i < len && self.is_consonant(i) {
                i += 1;
            }
            m += 1;
        }
    }

    fn has_vowel(&self, len: usize) -> bool {
        (0..len).any(|i| !self.is_consonant(i))
    }

    fn ends_double_consonant(&self, len: usize) -> bool {
        len >= 2 && self.chars[len - 1] == self.chars[len - 2] && self.is_consonant(len - 1)
    }

    /// *o: stem ends consonant-vowel-consonant, last not w, x or y.
    fn ends_cvc(&self, len: usize) -> bool {
        len >= 3
            && self.is_consonant(len - 3)
            && !self.is_consonant(len - 2)
            && self.is_consonant(len - 1)
            && !matches!(self.chars[len - 1], 'w' | 'x' | 'y')
    }

    fn ends_with(&self, suffix: &str) -> bool {
        let n = suffix.chars().count();
        n <= self.chars.len()
            && self.chars[self.chars.len() - n..]
                .iter()
                .copied()
                .eq(suffix.chars())
    }

    /// Length of the stem left after removing `suffix` (which must match).
    fn stem_len(&self, suffix: &str) -> usize {
        self.chars.len() - suffix.chars().count()
    }

    fn replace(&mut self, suffix: &str, with: &str) {
        let keep = self.stem_len(suffix);
        self.chars.truncate(keep);
        self.chars.extend(with.chars());
    }

    fn last(&self) -> Option<char> {
        self.chars.last().copied()
    }
}

fn step1a(w: &mut Word) {
    if w.ends_with("sses") {
        w.replace("sses", "ss");
    } else if w.ends_with("ies") {
        w.replace("ies", "i");
    } else if w.ends_with("ss") {
    } else if w.ends_with("s") {
        w.replace("s", "");
    }
}

fn step1b(w: &mut Word) {
    if w.ends_with("eed") {
        if w.measure(w.stem_len("eed")) > 0 {
            w.replace("eed", "ee");
        }
        return;
    }
    let removed = if w.ends_with("ed") && w.has_vowel(w.stem_len("ed")) {
        w.replace("ed", "");
        true
    } else if w.ends_with("ing") && w.has_vowel(w.stem_len("ing")) {
        w.replace("ing", "");
        true
    } else {
        false
    };
    if !removed {
        return;
    }
    if w.ends_with("at") {
        w.replace("at", "ate");
    } else if w.ends_with("bl") {
        w.replace("bl", "ble");
    } else if w.ends_with("iz") {
        w.replace("iz", "ize");
    } else if w.ends_double_consonant(w.chars.len()) && !matches!(w.last(), Some('l' | 's' | 'z')) {
        w.chars.pop();
    } else if w.measure(w.chars.len()) == 1 && w.ends_cvc(w.chars.len()) {
        w.chars.push('e');
    }
}

fn step1c(w: &mut Word) {
    if w.ends_with("y") && w.has_vowel(w.stem_len("y")) {
        w.replace("y", "i");
    }
}

/// Applies the rule for the longest matching suffix; if its condition fails
/// no other rule of the step is tried.
fn apply_rules(w: &mut Word, rules: &[(&str, &str)], min_measure: usize) {
    let mut candidates: Vec<&(&str, &str)> = rules.iter().filter(|(s, _)| w.ends_with(s)).collect();
    candidates.sort_by_key(|(s, _)| std::cmp::Reverse(s.len()));
    if let Some((suffix, with)) = candidates.first() {
        if w.measure(w.stem_len(suffix)) > min_measure {
            w.replace(suffix, with);
        }
    }
}

const STEP2: &[(&str, &str)] = &[
    ("ational", "ate"),
    ("tional", "tion"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("izer", "ize"),
    ("abli", "able"),
    ("alli", "al"),
    ("entli", "ent"),
    ("eli", "e"),
    ("ousli", "ous"),
    ("ization", "ize"),
    ("ation", "ate"),
    ("ator", "ate"),
    ("alism", "al"),
    ("iveness", "ive"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("aliti", "al"),
    ("iviti", "ive"),
    ("biliti", "ble"),
];

const STEP3: &[(&str, &str)] = &[
    ("icate", "ic"),
    ("ative", ""),
    ("alize", "al"),
    ("iciti", "ic"),
    ("ical", "ic"),
    ("ful", ""),
    ("ness", ""),
];

const STEP4: &[&str] = &[
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ion", "ou",
    "ism", "ate", "iti", "ous", "ive", "ize",
];

fn step4(w: &mut Word) {
    let Some(suffix) = STEP4
        .iter()
        .filter(|s| w.ends_with(s))
        .max_by_key(|s| s.len())
    else {
        return;
    };
    let stem = w.stem_len(suffix);
    if w.measure(stem) <= 1 {
        return;
    }
    if *suffix == "ion" && !(stem > 0 && matches!(w.chars[stem - 1], 's' | 't')) {
        return;
    }
    w.replace(suffix, "");
}

fn step5(w: &mut Word) {
    if w.ends_with("e") {
        let stem = w.stem_len("e");
        let m = w.measure(stem);
        if m > 1 || (m == 1 && !w.ends_cvc(stem)) {
            w.chars.pop();
        }
    }
    let len = w.chars.len();
    if w.measure(len) > 1 && w.ends_double_consonant(len) && w.last() == Some('l') {
        w.chars.pop();
    }
}

pub fn porter_stem(token: &str) -> String {
    let mut w = Word {
        chars: token.chars().collect(),
    };
    if w.chars.len() <= 2 {
        return token.to_owned();
    }
    step1a(&mut w);
    step1b(&mut w);
    step1c(&mut w);
    apply_rules(&mut w, STEP2, 0);
    apply_rules(&mut w, STEP3, 0);
    step4(&mut w);
    step5(&mut w);
    w.chars.into_iter().collect()
}
