//! Topic modeling over participant turns.
//!
//! Two methods share one result shape: collapsed-Gibbs LDA, and a
//! clustering pipeline (TF-IDF, truncated SVD, k-means, class-based TF-IDF
//! for the topic words). Runs are queued per topic and executed on
//! background threads by [`jobs::RunQueue`].
//!
//! ```
//! use colloquy_topics::{corpus::Corpus, lda::LdaConfig, run_lda, turns_for_topic_word};
//!
//! let docs = (0..12).map(|i| {
//!     let words: &[&str] = if i % 2 == 0 { &["virus", "mask", "vaccine"] } else { &["rent", "salary", "budget"] };
//!     words.iter().map(|w| w.to_string()).collect()
//! });
//! let corpus = Corpus::from_tokens(docs);
//! let result = run_lda(&corpus, 2, &LdaConfig { iterations: 200, seed: 7, ..LdaConfig::default() }).unwrap();
//! let rows: f64 = result.theta[0].iter().sum();
//! assert!((rows - 1.0).abs() < 1e-9);
//! assert!(!turns_for_topic_word(&result, &corpus, 0).is_empty());
//! ```

use std::collections::HashSet;

pub mod cluster;
pub mod coherence;
pub mod corpus;
pub mod jobs;
pub mod lda;
pub mod relevance;
pub mod result;
pub mod synthetic;

pub use cluster::run_cluster_topics;
pub use coherence::umass_coherence;
pub use corpus::{build_corpus, Corpus, Document, ModelError, TurnRef};
pub use jobs::{RunId, RunQueue, RunRequest, RunStatus, TopicModelRun};
pub use lda::{run_lda, LdaConfig};
pub use relevance::{relevance_view, RelevanceView};
pub use result::{Method, TopicModelResult, TOP_WORDS};

/// Every turn containing at least one of topic `k`'s top words, in corpus
/// order. An out-of-range `k` yields nothing.
pub fn turns_for_topic_word<'c>(result: &TopicModelResult, corpus: &'c Corpus, k: usize) -> Vec<&'c Document> {
    let Some(words) = result.top_words.get(k) else { return Vec::new() };
    let words: HashSet<&str> = words.iter().map(String::as_str).collect();
    matching(corpus, |t| words.contains(t))
}

/// Every turn containing `word`.
pub fn turns_for_word<'c>(corpus: &'c Corpus, word: &str) -> Vec<&'c Document> {
    matching(corpus, |t| t == word)
}

fn matching<'c>(corpus: &'c Corpus, hit: impl Fn(&str) -> bool) -> Vec<&'c Document> {
    corpus.docs.iter().filter(|d| d.tokens.iter().any(|t| hit(t))).collect()
}
