//! Seeded toy corpora with known topic structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;

pub const HALF_A: [&str; 10] =
    ["virus", "mask", "vaccine", "hospital", "fever", "doctor", "nurse", "symptom", "quarantine", "clinic"];
pub const HALF_B: [&str; 10] =
    ["rent", "salary", "budget", "savings", "invoice", "mortgage", "payment", "wallet", "pension", "income"];

/// `docs` documents alternating between two disjoint 10-word vocabularies,
/// each `doc_len` tokens drawn uniformly from its half. Returns the corpus
/// and each document's true half (0 or 1).
pub fn two_topic_corpus(docs: usize, doc_len: usize, seed: u64) -> (Corpus, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..docs).map(|i| i % 2).collect();
    let tokens = labels.iter().map(|&label| {
        let half = if label == 0 { &HALF_A } else { &HALF_B };
        (0..doc_len).map(|_| half[rng.random_range(0..half.len())].to_string()).collect::<Vec<_>>()
    });
    (Corpus::from_tokens(tokens.collect::<Vec<_>>()), labels)
}

/// Fraction of documents whose cluster's majority label matches their own.
pub fn purity(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len());
    if labels.is_empty() {
        return 1.0;
    }
    let clusters = assignments.iter().max().map_or(0, |m| m + 1);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; classes]; clusters];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1;
    }
    let majority: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    majority as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn purity_cases() {
        assert_eq!(purity(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(purity(&[0, 0, 0, 0], &[0, 1, 0, 1]), 0.5);
        assert_eq!(purity(&[0, 1, 1, 1], &[0, 0, 1, 1]), 0.75);
    }

    #[test]
    fn corpus_shape() {
        let (corpus, labels) = two_topic_corpus(10, 5, 1);
        assert_eq!(corpus.len(), 10);
        assert!(corpus.docs.iter().all(|d| d.tokens.len() == 5));
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 5);
        assert!(corpus.docs[0].tokens.iter().all(|t| HALF_A.contains(&t.as_str())));
    }
}
