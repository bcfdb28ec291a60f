use std::time::{Duration, Instant};

use colloquy_topics::coherence::umass_coherence;
use colloquy_topics::relevance::relevance_view;
use colloquy_topics::synthetic::{purity, two_topic_corpus, HALF_A, HALF_B};
use colloquy_topics::{run_cluster_topics, run_lda, Corpus, LdaConfig, TopicModelResult, TOP_WORDS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DOCS: usize = 200;
const DOC_LEN: usize = 20;

fn corpus() -> (Corpus, Vec<usize>) {
    two_topic_corpus(DOCS, DOC_LEN, 2024)
}

fn assert_row_stochastic(result: &TopicModelResult) {
    for row in result.phi.iter().chain(&result.theta) {
        let sum: f64 = row.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "row sums to {sum}");
        assert!(row.iter().all(|&p| p >= 0.0));
    }
}

/// The same top words dealt into topics at random.
fn shuffled_baseline(result: &TopicModelResult, corpus: &Corpus, seed: u64) -> f64 {
    let mut pool: Vec<String> = result.top_words.iter().flatten().cloned().collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut lists = Vec::new();
    let mut rest = pool.as_slice();
    for words in &result.top_words {
        let (head, tail) = rest.split_at(words.len());
        lists.push(head.to_vec());
        rest = tail;
    }
    umass_coherence(&lists, corpus, TOP_WORDS)
}

fn halves_recovered(result: &TopicModelResult) {
    for words in &result.top_words {
        let in_a = words.iter().filter(|w| HALF_A.contains(&w.as_str())).count();
        let in_b = words.iter().filter(|w| HALF_B.contains(&w.as_str())).count();
        assert!(in_a == 0 || in_b == 0, "mixed topic {words:?}");
    }
}

#[test]
fn lda_recovers_two_topics() {
    let (corpus, labels) = corpus();
    let config = LdaConfig { seed: 11, ..LdaConfig::default() };
    let clock = Instant::now();
    let result = run_lda(&corpus, 2, &config).unwrap();
    assert!(clock.elapsed() < Duration::from_secs(30));

    assert!(purity(&result.assignments(), &labels) >= 0.9);
    assert_row_stochastic(&result);
    halves_recovered(&result);

    let again = run_lda(&corpus, 2, &config).unwrap();
    assert_eq!(result, again);
    let bits = |r: &TopicModelResult| r.phi.iter().flatten().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&result), bits(&again));

    let coherence = umass_coherence(&result.top_words, &corpus, TOP_WORDS);
    for seed in 0..20 {
        assert!(coherence > shuffled_baseline(&result, &corpus, seed));
    }
}

#[test]
fn cluster_method_recovers_two_topics() {
    let (corpus, labels) = corpus();
    let result = run_cluster_topics(&corpus, 2, 5).unwrap();
    assert!(purity(&result.assignments(), &labels) >= 0.9);
    assert_row_stochastic(&result);
    for row in &result.theta {
        assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
        assert_eq!(row.iter().filter(|&&p| p == 0.0).count(), row.len() - 1);
    }
    halves_recovered(&result);
    assert_eq!(result, run_cluster_topics(&corpus, 2, 5).unwrap());

    let coherence = umass_coherence(&result.top_words, &corpus, TOP_WORDS);
    assert!(coherence > shuffled_baseline(&result, &corpus, 3));
}

#[test]
fn relevance_view_on_separated_topics() {
    let (corpus, _) = corpus();
    let result = run_cluster_topics(&corpus, 2, 5).unwrap();
    let view = relevance_view(&result, 0.6).unwrap();
    assert_eq!(view.topics.len(), 2);
    assert!(view.topics.iter().all(|t| t.len() <= 30 && !t.is_empty()));
    // disjoint supports give the maximum JS divergence, ln 2
    assert!((view.distances[0][1] - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn more_topics_than_documents_fails() {
    let (corpus, _) = two_topic_corpus(3, 4, 1);
    assert!(run_lda(&corpus, 5, &LdaConfig::default()).is_err());
    assert!(run_cluster_topics(&corpus, 5, 0).is_err());
}
