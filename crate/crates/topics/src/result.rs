use serde::{Deserialize, Serialize};

use crate::corpus::{Encoded, TurnRef};

/// Number of words listed per topic.
pub const TOP_WORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lda,
    Cluster,
}

/// A fitted model. `phi` is K×V (topic-word), `theta` is D×K
/// (document-topic); both are row-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelResult {
    pub method: Method,
    pub k: usize,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub vocab: Vec<String>,
    pub doc_ids: Vec<TurnRef>,
    /// Share of corpus tokens attributed to each topic.
    pub topic_frequencies: Vec<f64>,
    /// Empirical probability of each vocabulary term in the corpus.
    pub term_frequencies: Vec<f64>,
    pub top_words: Vec<Vec<String>>,
}

pub(crate) fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 {
        for x in row.iter_mut() {
            *x /= total;
        }
    }
}

/// Indices of `row` by decreasing weight, ties by term.
pub(crate) fn ranked(row: &[f64], vocab: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then_with(|| vocab[a].cmp(&vocab[b])));
    order
}

impl TopicModelResult {
    pub(crate) fn assemble(
        method: Method,
        encoded: &Encoded,
        doc_ids: Vec<TurnRef>,
        phi: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
    ) -> Self {
        let k = phi.len();
        let lengths: Vec<f64> = encoded.docs.iter().map(|d| d.len() as f64).collect();
        let mut topic_frequencies = vec![0.0; k];
        for (row, len) in theta.iter().zip(&lengths) {
            for (f, t) in topic_frequencies.iter_mut().zip(row) {
                *f += t * len;
            }
        }
        normalize(&mut topic_frequencies);
        let mut term_frequencies: Vec<f64> = encoded.term_counts().into_iter().map(|c| c as f64).collect();
        normalize(&mut term_frequencies);
        let top_words = phi
            .iter()
            .map(|row| {
                ranked(row, &encoded.vocab)
                    .into_iter()
                    .filter(|&w| row[w] > 0.0)
                    .take(TOP_WORDS)
                    .map(|w| encoded.vocab[w].clone())
                    .collect()
            })
            .collect();
        TopicModelResult {
            method,
            k,
            phi,
            theta,
            vocab: encoded.vocab.clone(),
            doc_ids,
            topic_frequencies,
            term_frequencies,
            top_words,
        }
    }

    /// The most probable topic of each document, ties to the lower index.
    pub fn assignments(&self) -> Vec<usize> {
        self.theta
            .iter()
            .map(|row| {
                row.iter().enumerate().fold(0, |best, (k, &p)| if p > row[best] { k } else { best })
            })
            .collect()
    }
}
