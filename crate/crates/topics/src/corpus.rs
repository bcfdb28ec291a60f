//! Documents for topic modeling: one per participant message.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use colloquy_core::dialogue::{ConversationSession, SessionId, Speaker};
use colloquy_core::lexicon::tokenize;
use serde::{Deserialize, Serialize};

/// Tokens shorter than this are dropped before modeling.
pub const MIN_TOKEN_CHARS: usize = 3;

fn stopwords() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| include_str!("../data/stopwords.txt").lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

pub fn is_stopword(token: &str) -> bool {
    stopwords().contains(token)
}

/// Tokenizes with the dialogue tokenizer, then removes stopwords and short
/// tokens.
pub fn model_tokens(text: &str) -> Vec<String> {
    tokenize(text)
        .tokens
        .into_iter()
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS && !is_stopword(t))
        .collect()
}

/// Where a document came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TurnRef {
    pub session_id: SessionId,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub source: TurnRef,
    pub text: String,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum ModelError {
    #[error("corpus too small: {docs} documents for {k} topics")]
    CorpusTooSmall { docs: usize, k: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Corpus {
    /// Builds documents from raw texts; texts with no tokens left are
    /// dropped.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = (TurnRef, &'a str)>) -> Self {
        let docs = texts
            .into_iter()
            .filter_map(|(source, text)| {
                let tokens = model_tokens(text);
                (!tokens.is_empty()).then(|| Document { source, text: text.to_owned(), tokens })
            })
            .collect();
        Corpus { docs }
    }

    /// Documents that are already tokenized; empty ones are dropped.
    pub fn from_tokens(docs: impl IntoIterator<Item = Vec<String>>) -> Self {
        let docs = docs
            .into_iter()
            .enumerate()
            .filter(|(_, tokens)| !tokens.is_empty())
            .map(|(i, tokens)| Document {
                source: TurnRef { session_id: SessionId(format!("doc{i}")), turn_index: i },
                text: tokens.join(" "),
                tokens,
            })
            .collect();
        Corpus { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.docs.iter().map(|d| d.tokens.len()).sum()
    }

    pub fn require(&self, k: usize) -> Result<(), ModelError> {
        if k == 0 {
            return Err(ModelError::InvalidConfig("the number of topics must be at least 1".into()));
        }
        if self.docs.len() < k {
            return Err(ModelError::CorpusTooSmall { docs: self.docs.len(), k });
        }
        Ok(())
    }

    /// Sorted vocabulary and each document as vocabulary indices.
    pub fn encode(&self) -> Encoded {
        let vocab: Vec<String> =
            self.docs.iter().flat_map(|d| d.tokens.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let docs = self.docs.iter().map(|d| d.tokens.iter().map(|t| index[t.as_str()]).collect()).collect();
        Encoded { vocab, docs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub vocab: Vec<String>,
    pub docs: Vec<Vec<usize>>,
}

impl Encoded {
    pub fn term_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.vocab.len()];
        for doc in &self.docs {
            for &w in doc {
                counts[w] += 1;
            }
        }
        counts
    }
}

/// One document per participant message of each completed session.
pub fn build_corpus(sessions: &[ConversationSession]) -> Corpus {
    Corpus::from_texts(sessions.iter().filter(|s| s.is_complete()).flat_map(|s| {
        s.turns.iter().enumerate().filter(|(_, t)| t.speaker == Speaker::Participant).map(|(i, t)| {
            (TurnRef { session_id: s.id.clone(), turn_index: i }, t.text.as_str())
        })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: usize) -> TurnRef {
        TurnRef { session_id: SessionId("s".into()), turn_index: i }
    }

    #[test]
    fn stopwords_and_short_tokens_removed() {
        assert_eq!(model_tokens("I am so anxious about covid"), ["anxious", "covid"]);
        assert_eq!(model_tokens("I'm on it, ok?"), Vec::<String>::new());
    }

    #[test]
    fn duplicates_stay_separate_and_empties_drop() {
        let c = Corpus::from_texts([(r(0), "worried about rent"), (r(1), "worried about rent"), (r(2), "it is")]);
        assert_eq!(c.len(), 2);
        assert_eq!(c.docs[0].tokens, c.docs[1].tokens);
    }

    #[test]
    fn too_small() {
        let c = Corpus::default();
        assert_eq!(c.require(2), Err(ModelError::CorpusTooSmall { docs: 0, k: 2 }));
        assert!(build_corpus(&[]).is_empty());
    }

    #[test]
    fn encoding_is_sorted() {
        let c = Corpus::from_tokens(vec![vec!["zeta".into(), "alpha".into()], vec!["alpha".into()]]);
        let e = c.encode();
        assert_eq!(e.vocab, ["alpha", "zeta"]);
        assert_eq!(e.docs, vec![vec![1, 0], vec![0]]);
        assert_eq!(e.term_counts(), vec![2, 1]);
    }
}
