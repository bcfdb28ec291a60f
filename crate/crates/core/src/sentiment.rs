//! Rule-based valence-lexicon sentiment (the VADER procedure).
//!
//! Each whitespace-separated word is looked up in a valence lexicon and
//! adjusted by nearby boosters and dampeners, negations, ALL-CAPS emphasis,
//! and contrastive "but". The adjusted valences are summed, amplified by
//! `!`/`?` punctuation, and squashed into `[-1, 1]` by
//! `s / sqrt(s² + 15)`.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

const BOOSTER_INCREMENT: f64 = 0.293;
const CAPS_INCREMENT: f64 = 0.733;
const NEGATION_SCALAR: f64 = -0.74;
const EXCLAMATION_INCREMENT: f64 = 0.292;
const QUESTION_INCREMENT: f64 = 0.18;
const QUESTION_CAP: f64 = 0.96;
const NORMALIZATION_ALPHA: f64 = 15.0;

pub const POSITIVE_THRESHOLD: f64 = 0.05;
pub const NEGATIVE_THRESHOLD: f64 = -0.05;

/// Idioms whose valence replaces the computed one.
const SPECIAL_CASES: &[(&str, f64)] = &[
    ("the shit", 3.0),
    ("the bomb", 3.0),
    ("bad ass", 1.5),
    ("badass", 1.5),
    ("bus stop", 0.0),
    ("yeah right", -2.0),
    ("kiss of death", -1.5),
    ("to die for", 3.0),
    ("beating heart", 3.5),
];

const BUNDLED_LEXICON: &str = include_str!("../data/valence_lexicon.tsv");
const BUNDLED_BOOSTERS: &str = include_str!("../data/boosters.txt");
const BUNDLED_DAMPENERS: &str = include_str!("../data/dampeners.txt");
const BUNDLED_NEGATIONS: &str = include_str!("../data/negations.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub fn from_compound(compound: f64) -> Self {
        if compound >= POSITIVE_THRESHOLD {
            SentimentLabel::Positive
        } else if compound <= NEGATIVE_THRESHOLD {
            SentimentLabel::Negative
        } else {
            SentimentLabel::Neutral
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub label: SentimentLabel,
    pub compound: f64,
}

impl SentimentResult {
    pub fn from_compound(compound: f64) -> Self {
        SentimentResult { label: SentimentLabel::from_compound(compound), compound }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconFileError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("valence lexicon is empty")]
    Empty,
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct ValenceLexicon {
    valence: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negations: HashSet<String>,
}

impl ValenceLexicon {
    /// The desk-scale lexicon compiled into the binary.
    pub fn bundled() -> &'static ValenceLexicon {
        static BUNDLED: OnceLock<ValenceLexicon> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            ValenceLexicon::parse(BUNDLED_LEXICON, BUNDLED_BOOSTERS, BUNDLED_DAMPENERS, BUNDLED_NEGATIONS)
                .expect("bundled lexicon is well formed")
        })
    }

    /// Parses a `token<TAB>mean_valence` lexicon (further columns ignored)
    /// and word-per-line booster, dampener and negation lists.
    pub fn parse(lexicon: &str, boosters: &str, dampeners: &str, negations: &str) -> Result<Self, LexiconFileError> {
        let mut valence = HashMap::new();
        for (n, line) in lexicon.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.trim().split('\t');
            let (Some(token), Some(score)) = (cols.next(), cols.next()) else {
                return Err(LexiconFileError::Malformed { line: n + 1, message: "expected token<TAB>valence".into() });
            };
            let score: f64 = score.trim().parse().map_err(|_| LexiconFileError::Malformed {
                line: n + 1,
                message: format!("invalid valence {score:?}"),
            })?;
            valence.insert(token.to_owned(), score);
        }
        if valence.is_empty() {
            return Err(LexiconFileError::Empty);
        }
        let words = |text: &str| -> Vec<String> {
            text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect()
        };
        let boosters = words(boosters)
            .into_iter()
            .map(|w| (w, BOOSTER_INCREMENT))
            .chain(words(dampeners).into_iter().map(|w| (w, -BOOSTER_INCREMENT)))
            .collect();
        let negations = words(negations).into_iter().collect();
        Ok(ValenceLexicon { valence, boosters, negations })
    }

    pub fn load(
        lexicon: &Path,
        boosters: &Path,
        dampeners: &Path,
        negations: &Path,
    ) -> Result<Self, LexiconFileError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| LexiconFileError::Io { path: p.display().to_string(), source })
        };
        Self::parse(&read(lexicon)?, &read(boosters)?, &read(dampeners)?, &read(negations)?)
    }

    /// Replaces the valence table, keeping the bundled modifier lists.
    pub fn with_valences(valence: HashMap<String, f64>) -> Self {
        let bundled = Self::bundled();
        ValenceLexicon { valence, boosters: bundled.boosters.clone(), negations: bundled.negations.clone() }
    }

    pub fn len(&self) -> usize {
        self.valence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valence.is_empty()
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.valence.get(token).copied()
    }

    pub fn classify(&self, text: &str) -> SentimentResult {
        Scorer::new(self, text).score()
    }

    fn contains(&self, word: &str) -> bool {
        self.valence.contains_key(word)
    }

    fn is_negation(&self, word: &str) -> bool {
        self.negations.contains(word) || word.contains("n't")
    }
}

pub fn classify_sentiment(text: &str, lexicon: &ValenceLexicon) -> SentimentResult {
    lexicon.classify(text)
}

/// Python's `str.isupper`: at least one cased character, none lowercase.
fn is_all_caps(word: &str) -> bool {
    let mut cased = false;
    for c in word.chars() {
        if c.is_lowercase() {
            return false;
        }
        cased |= c.is_uppercase();
    }
    cased
}

/// Strips surrounding ASCII punctuation unless that would leave two or fewer
/// characters (which keeps emoticons like `:)` intact).
fn strip_punctuation(token: &str) -> &str {
    let stripped = token.trim_matches(|c: char| c.is_ascii_punctuation());
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

struct Scorer<'a> {
    lexicon: &'a ValenceLexicon,
    text: &'a str,
    words: Vec<&'a str>,
    lower: Vec<String>,
    caps_differential: bool,
}

impl<'a> Scorer<'a> {
    fn new(lexicon: &'a ValenceLexicon, text: &'a str) -> Self {
        let words: Vec<&str> = text.split_whitespace().map(strip_punctuation).collect();
        let lower = words.iter().map(|w| w.to_lowercase()).collect();
        let caps = words.iter().filter(|w| is_all_caps(w)).count();
        let caps_differential = caps > 0 && caps < words.len();
        Scorer { lexicon, text, words, lower, caps_differential }
    }

    fn score(&self) -> SentimentResult {
        if self.words.is_empty() {
            return SentimentResult::from_compound(0.0);
        }
        let mut sentiments = Vec::with_capacity(self.words.len());
        for i in 0..self.words.len() {
            let word = self.lower[i].as_str();
            let skip = self.lexicon.boosters.contains_key(word)
                || (word == "kind" && self.lower.get(i + 1).is_some_and(|n| n == "of"));
            sentiments.push(if skip { 0.0 } else { self.word_valence(i) });
        }
        self.apply_but(&mut sentiments);

        let mut sum: f64 = sentiments.iter().sum();
        let emphasis = self.punctuation_emphasis();
        if sum > 0.0 {
            sum += emphasis;
        } else if sum < 0.0 {
            sum -= emphasis;
        }
        let compound = (sum / (sum * sum + NORMALIZATION_ALPHA).sqrt()).clamp(-1.0, 1.0);
        SentimentResult::from_compound(compound)
    }

    fn word_valence(&self, i: usize) -> f64 {
        let word = self.lower[i].as_str();
        let Some(base) = self.lexicon.valence(word) else {
            return 0.0;
        };
        let mut valence = base;
        // "no" directly before another lexicon word acts as a negator, not a
        // sentiment word of its own.
        if word == "no" && self.lower.get(i + 1).is_some_and(|n| self.lexicon.contains(n)) {
            valence = 0.0;
        }
        if (i > 0 && self.lower[i - 1] == "no")
            || (i > 1 && self.lower[i - 2] == "no")
            || (i > 2 && self.lower[i - 3] == "no" && matches!(self.lower[i - 1].as_str(), "or" | "nor"))
        {
            valence = base * NEGATION_SCALAR;
        }
        if is_all_caps(self.words[i]) && self.caps_differential {
            valence += if valence > 0.0 { CAPS_INCREMENT } else { -CAPS_INCREMENT };
        }
        for distance in 0..3 {
            if i > distance && !self.lexicon.contains(&self.lower[i - distance - 1]) {
                let mut scalar = self.booster_scalar(i - distance - 1, valence);
                if distance == 1 && scalar != 0.0 {
                    scalar *= 0.95;
                }
                if distance == 2 && scalar != 0.0 {
                    scalar *= 0.9;
                }
                valence += scalar;
                valence = self.negation(valence, distance, i);
                if distance == 2 {
                    valence = self.special_idioms(valence, i);
                }
            }
        }
        self.least(valence, i)
    }

    fn booster_scalar(&self, j: usize, valence: f64) -> f64 {
        let Some(&b) = self.lexicon.boosters.get(&self.lower[j]) else {
            return 0.0;
        };
        let mut scalar = if valence < 0.0 { -b } else { b };
        if is_all_caps(self.words[j]) && self.caps_differential {
            scalar += if valence > 0.0 { CAPS_INCREMENT } else { -CAPS_INCREMENT };
        }
        scalar
    }

    fn negation(&self, valence: f64, distance: usize, i: usize) -> f64 {
        let w = |back: usize| self.lower[i - back].as_str();
        let negated = self.lexicon.is_negation(w(distance + 1));
        match distance {
            0 if negated => valence * NEGATION_SCALAR,
            1 if w(2) == "never" && matches!(w(1), "so" | "this") => valence * 1.25,
            1 if w(2) == "without" && w(1) == "doubt" => valence,
            1 if negated => valence * NEGATION_SCALAR,
            2 if (w(3) == "never" && matches!(w(2), "so" | "this")) || matches!(w(1), "so" | "this") => {
                valence * 1.25
            }
            2 if w(3) == "without" && (w(2) == "doubt" || w(1) == "doubt") => valence,
            2 if negated => valence * NEGATION_SCALAR,
            _ => valence,
        }
    }

    fn special_idioms(&self, mut valence: f64, i: usize) -> f64 {
        let w = |j: usize| self.lower[j].as_str();
        let one_zero = format!("{} {}", w(i - 1), w(i));
        let two_one_zero = format!("{} {} {}", w(i - 2), w(i - 1), w(i));
        let two_one = format!("{} {}", w(i - 2), w(i - 1));
        let three_two_one = format!("{} {} {}", w(i - 3), w(i - 2), w(i - 1));
        let three_two = format!("{} {}", w(i - 3), w(i - 2));
        let special = |seq: &str| SPECIAL_CASES.iter().find(|(k, _)| *k == seq).map(|&(_, v)| v);

        if let Some(v) = [&one_zero, &two_one_zero, &two_one, &three_two_one, &three_two]
            .into_iter()
            .find_map(|s| special(s))
        {
            valence = v;
        }
        let n = self.lower.len();
        if n - 1 > i {
            if let Some(v) = special(&format!("{} {}", w(i), w(i + 1))) {
                valence = v;
            }
        }
        if n - 1 > i + 1 {
            if let Some(v) = special(&format!("{} {} {}", w(i), w(i + 1), w(i + 2))) {
                valence = v;
            }
        }
        // multiword dampeners such as "kind of" just before the word
        for ngram in [&three_two_one, &three_two, &two_one] {
            if let Some(&b) = self.lexicon.boosters.get(ngram.as_str()) {
                valence += b;
            }
        }
        valence
    }

    fn least(&self, valence: f64, i: usize) -> f64 {
        let prev_is_least = |j: usize| !self.lexicon.contains(&self.lower[j]) && self.lower[j] == "least";
        if i > 1 && prev_is_least(i - 1) {
            if self.lower[i - 2] != "at" && self.lower[i - 2] != "very" {
                return valence * NEGATION_SCALAR;
            }
            valence
        } else if i > 0 && prev_is_least(i - 1) {
            valence * NEGATION_SCALAR
        } else {
            valence
        }
    }

    /// Halves sentiment before the first "but" and boosts it by half after.
    ///
    /// Mirrors the reference implementation exactly, including its lookup
    /// of each value's *first* occurrence, so repeated values are rescaled
    /// at that first position.
    fn apply_but(&self, sentiments: &mut [f64]) {
        let Some(but) = self.lower.iter().position(|w| w == "but") else {
            return;
        };
        for p in 0..sentiments.len() {
            let value = sentiments[p];
            let first = sentiments.iter().position(|&s| s == value).expect("value is present");
            if first < but {
                sentiments[first] = value * 0.5;
            } else if first > but {
                sentiments[first] = value * 1.5;
            }
        }
    }

    fn punctuation_emphasis(&self) -> f64 {
        let exclamations = self.text.matches('!').count().min(4);
        let questions = self.text.matches('?').count();
        let question_emphasis = match questions {
            0 | 1 => 0.0,
            2 | 3 => questions as f64 * QUESTION_INCREMENT,
            _ => QUESTION_CAP,
        };
        exclamations as f64 * EXCLAMATION_INCREMENT + question_emphasis
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label(text: &str) -> SentimentLabel {
        ValenceLexicon::bundled().classify(text).label
    }

    #[test]
    fn bundled_lexicon_is_desk_sized() {
        let lex = ValenceLexicon::bundled();
        assert_eq!(lex.len(), 500);
        assert!(lex.is_negation("not"));
        assert!(lex.is_negation("wouldn't"));
    }

    #[test]
    fn empty_text_is_neutral_zero() {
        let r = ValenceLexicon::bundled().classify("");
        assert_eq!(r.compound, 0.0);
        assert_eq!(r.label, SentimentLabel::Neutral);
        assert_eq!(ValenceLexicon::bundled().classify("   \n ").compound, 0.0);
    }

    #[test]
    fn examples() {
        assert_eq!(label("I love this"), SentimentLabel::Positive);
        assert_eq!(label("I am not happy about the outbreak"), SentimentLabel::Negative);
    }

    #[test]
    fn no_lexicon_words_is_exactly_neutral() {
        let r = ValenceLexicon::bundled().classify("The table is next to the window.");
        assert_eq!(r.compound, 0.0);
        assert_eq!(r.label, SentimentLabel::Neutral);
    }

    #[test]
    fn thresholds() {
        assert_eq!(SentimentLabel::from_compound(0.05), SentimentLabel::Positive);
        assert_eq!(SentimentLabel::from_compound(0.0499), SentimentLabel::Neutral);
        assert_eq!(SentimentLabel::from_compound(-0.05), SentimentLabel::Negative);
        assert_eq!(SentimentLabel::from_compound(-0.0499), SentimentLabel::Neutral);
    }

    #[test]
    fn modifiers_shift_compound() {
        let lex = ValenceLexicon::with_valences(HashMap::from([("good".to_owned(), 1.9)]));
        let plain = lex.classify("the food was good").compound;
        let boosted = lex.classify("the food was very good").compound;
        let shouted = lex.classify("the food was GOOD").compound;
        let excited = lex.classify("the food was good!!").compound;
        let negated = lex.classify("the food was not good").compound;
        assert!(boosted > plain);
        assert!(shouted > plain);
        assert!(excited > plain);
        assert!(negated < 0.0);
        let expected = 1.9 / (1.9f64 * 1.9 + 15.0).sqrt();
        assert!((plain - expected).abs() < 1e-12);
    }

    #[test]
    fn but_reweights_clauses() {
        let lex = ValenceLexicon::with_valences(HashMap::from([("good".to_owned(), 2.0), ("bad".to_owned(), -2.0)]));
        // 2*0.5 + (-2)*1.5 = -2
        let r = lex.classify("good but bad");
        let expected = -2.0 / (4.0f64 + 15.0).sqrt();
        assert!((r.compound - expected).abs() < 1e-12);
    }

    #[test]
    fn malformed_lexicon_reports_line() {
        let err = ValenceLexicon::parse("good\t1.0\nbad\n", "", "", "").unwrap_err();
        assert!(matches!(err, LexiconFileError::Malformed { line: 2, .. }));
        assert!(matches!(ValenceLexicon::parse("", "", "", ""), Err(LexiconFileError::Empty)));
    }

    const SYNTH_WORDS: &[&str] = &["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"];
    const MODIFIERS: &[&str] = &["very", "not", "never", "barely", "extremely", "least", "but", "the", "and"];

    proptest! {
        #[test]
        fn sign_symmetry(
            valences in proptest::collection::vec(prop_oneof![-4.0f64..-0.1, 0.1f64..4.0], SYNTH_WORDS.len()),
            picks in proptest::collection::vec(0usize..(SYNTH_WORDS.len() + MODIFIERS.len()), 0..14),
        ) {
            let words: Vec<&str> = picks
                .iter()
                .map(|&p| if p < SYNTH_WORDS.len() { SYNTH_WORDS[p] } else { MODIFIERS[p - SYNTH_WORDS.len()] })
                .collect();
            let text = words.join(" ");
            let lex: HashMap<String, f64> =
                SYNTH_WORDS.iter().zip(&valences).map(|(w, v)| (w.to_string(), *v)).collect();
            let flipped: HashMap<String, f64> = lex.iter().map(|(w, v)| (w.clone(), -v)).collect();
            let a = ValenceLexicon::with_valences(lex).classify(&text).compound;
            let b = ValenceLexicon::with_valences(flipped).classify(&text).compound;
            prop_assert!((a + b).abs() < 1e-9, "{} vs {} for {:?}", a, b, text);
        }

        #[test]
        fn label_follows_compound(text in "\\PC{0,80}") {
            let r = ValenceLexicon::bundled().classify(&text);
            prop_assert_eq!(r.label, SentimentLabel::from_compound(r.compound));
            prop_assert!((-1.0..=1.0).contains(&r.compound));
        }
    }
}
