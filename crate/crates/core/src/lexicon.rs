//! Tokenization, lexicon-category counting and the dominant-category rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{LexiconCategory, Term};

/// Lowercase word tokens of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenizedText {
    pub tokens: Vec<String>,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits on every character that is not a letter, a digit, or an apostrophe
/// with a letter or digit on both sides. Tokens are lowercased; typographic
/// apostrophes are normalized to `'`.
pub fn tokenize(text: &str) -> TokenizedText {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase().filter(|l| l.is_alphanumeric()));
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenizedText { tokens }
}

/// Per-category match counts for one response (or a sum of responses).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub counts: BTreeMap<String, u32>,
    pub total_tokens: u32,
}

impl CategoryCounts {
    pub fn get(&self, category: &str) -> u32 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    /// Elementwise sum. Counts are additive across texts because every token
    /// is scored independently.
    pub fn add(&mut self, other: &CategoryCounts) {
        for (name, count) in &other.counts {
            *self.counts.entry(name.clone()).or_default() += count;
        }
        self.total_tokens += other.total_tokens;
    }

    /// Keeps only the named categories, inserting zeros for missing ones.
    pub fn restricted_to<'a>(&self, categories: impl IntoIterator<Item = &'a str>) -> CategoryCounts {
        CategoryCounts {
            counts: categories.into_iter().map(|c| (c.to_owned(), self.get(c))).collect(),
            total_tokens: self.total_tokens,
        }
    }
}

/// Categories compiled for repeated matching.
#[derive(Debug, Clone)]
pub struct CategoryMatcher {
    categories: Vec<(String, Vec<Term>)>,
}

impl CategoryMatcher {
    pub fn new<'a>(categories: impl IntoIterator<Item = &'a LexiconCategory>) -> Self {
        CategoryMatcher {
            categories: categories.into_iter().map(|c| (c.name.clone(), c.terms.clone())).collect(),
        }
    }

    pub fn category_names(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|(n, _)| n.as_str())
    }

    pub fn count<'t>(&self, tokens: impl IntoIterator<Item = &'t str>) -> CategoryCounts {
        let mut counts: BTreeMap<String, u32> = self.categories.iter().map(|(n, _)| (n.clone(), 0)).collect();
        let mut total = 0;
        for token in tokens {
            total += 1;
            for (name, terms) in &self.categories {
                // A token counts once per category even if several terms match it.
                if terms.iter().any(|t| t.matches(token)) {
                    *counts.get_mut(name).expect("seeded above") += 1;
                }
            }
        }
        CategoryCounts { counts, total_tokens: total }
    }
}

pub fn match_categories(tokens: &TokenizedText, categories: &[LexiconCategory]) -> CategoryCounts {
    CategoryMatcher::new(categories).count(tokens.iter())
}

/// The category whose count exceeds the runner-up's by more than 50%, if any.
/// Ties at the top never produce a dominant category.
pub fn dominant_category(counts: &CategoryCounts) -> Option<&str> {
    let mut first: Option<(&str, u32)> = None;
    let mut second = 0u32;
    for (name, &count) in &counts.counts {
        match first {
            Some((_, top)) if count <= top => second = second.max(count),
            Some((_, top)) => {
                second = top;
                first = Some((name, count));
            }
            None => first = Some((name, count)),
        }
    }
    let (name, top) = first?;
    (top > 0 && 2 * u64::from(top) > 3 * u64::from(second)).then_some(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_term_list, CategoryId};
    use proptest::prelude::*;

    fn cat(name: &str, terms: &str) -> LexiconCategory {
        LexiconCategory { id: CategoryId(0), name: name.into(), terms: parse_term_list(terms) }
    }

    fn counts(pairs: &[(&str, u32)]) -> CategoryCounts {
        CategoryCounts { counts: pairs.iter().map(|(n, c)| (n.to_string(), *c)).collect(), total_tokens: 100 }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("I'm SICK—really sick.").tokens, ["i'm", "sick", "really", "sick"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("covid-19").tokens, ["covid", "19"]);
        assert_eq!(tokenize("'quoted' rock'n'roll don’t").tokens, ["quoted", "rock'n'roll", "don't"]);
        assert_eq!(tokenize("Ünïcode ÉCOLE").tokens, ["ünïcode", "école"]);
    }

    #[test]
    fn stem_and_exact_matching() {
        let health = cat("health", "sick, ill*");
        let c = match_categories(&tokenize("sick illness joy"), &[health]);
        assert_eq!(c.get("health"), 2);
        assert_eq!(c.total_tokens, 3);

        let pos = cat("pos", "joy");
        assert_eq!(match_categories(&tokenize("joyful"), &[pos]).get("pos"), 0);
    }

    #[test]
    fn empty_tokens_give_zero_counts() {
        let c = match_categories(&tokenize(""), &[cat("a", "x"), cat("b", "y*")]);
        assert_eq!(c.counts.values().sum::<u32>(), 0);
        assert_eq!(c.counts.len(), 2);
        assert_eq!(c.total_tokens, 0);
    }

    #[test]
    fn token_counts_once_per_category() {
        let c = match_categories(&tokenize("illness ill"), &[cat("h", "ill, ill*, illness"), cat("g", "ill*")]);
        assert_eq!(c.get("h"), 2);
        assert_eq!(c.get("g"), 2);
    }

    #[test]
    fn dominance_examples() {
        assert_eq!(dominant_category(&counts(&[("health", 5), ("work", 3)])), Some("health"));
        assert_eq!(dominant_category(&counts(&[("health", 3), ("work", 2)])), None);
        assert_eq!(dominant_category(&counts(&[("health", 2)])), Some("health"));
        assert_eq!(dominant_category(&counts(&[("health", 4), ("work", 4)])), None);
        assert_eq!(dominant_category(&counts(&[("health", 0), ("work", 0)])), None);
        assert_eq!(dominant_category(&counts(&[])), None);
        assert_eq!(dominant_category(&counts(&[("a", 1), ("b", 7), ("c", 4)])), Some("b"));
    }

    proptest! {
        #[test]
        fn dominance_is_scale_invariant(
            raw in proptest::collection::btree_map("[a-e]", 0u32..50, 0..5),
            factor in 1u32..20,
        ) {
            let base = CategoryCounts { counts: raw.clone(), total_tokens: 0 };
            let scaled = CategoryCounts {
                counts: raw.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
                total_tokens: 0,
            };
            prop_assert_eq!(dominant_category(&base), dominant_category(&scaled));
        }

        #[test]
        fn dominant_has_strict_maximum(raw in proptest::collection::btree_map("[a-e]", 0u32..10, 0..5)) {
            let c = CategoryCounts { counts: raw.clone(), total_tokens: 0 };
            if let Some(name) = dominant_category(&c) {
                let top = raw[name];
                prop_assert!(raw.iter().all(|(k, &v)| k == name || v < top));
            }
        }

        #[test]
        fn tokenize_join_is_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            let again = tokenize(&once.tokens.join(" "));
            prop_assert_eq!(once, again);
        }

        #[test]
        fn tokens_are_clean(text in "\\PC{0,60}") {
            for token in tokenize(&text).tokens {
                prop_assert!(!token.is_empty());
                prop_assert!(!token.chars().any(char::is_whitespace));
            }
        }
    }
}
