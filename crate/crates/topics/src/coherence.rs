//! UMass topic coherence from document co-occurrence counts.

use std::collections::{HashMap, HashSet};

use crate::corpus::Corpus;

/// Document frequencies of single words and word pairs, restricted to the
/// words of interest.
struct DocCounts<'a> {
    single: HashMap<&'a str, u32>,
    pair: HashMap<(&'a str, &'a str), u32>,
}

impl<'a> DocCounts<'a> {
    fn new(corpus: &Corpus, words: &HashSet<&'a str>) -> Self {
        let mut single = HashMap::new();
        let mut pair = HashMap::new();
        for doc in &corpus.docs {
            let present: Vec<&'a str> = {
                let mut p: Vec<&'a str> =
                    words.iter().copied().filter(|w| doc.tokens.iter().any(|t| t == w)).collect();
                p.sort_unstable();
                p
            };
            for (i, a) in present.iter().enumerate() {
                *single.entry(*a).or_insert(0) += 1;
                for b in &present[i + 1..] {
                    *pair.entry((*a, *b)).or_insert(0) += 1;
                }
            }
        }
        DocCounts { single, pair }
    }

    fn co(&self, a: &str, b: &str) -> u32 {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pair.get(&key).copied().unwrap_or(0)
    }
}

/// Coherence of one ranked word list: the sum over rank pairs `i < j` of
/// `ln((D(w_i, w_j) + 1) / D(w_j))`. Pairs whose `w_j` occurs in no
/// document are skipped.
pub fn topic_umass(words: &[String], corpus: &Corpus) -> f64 {
    let set: HashSet<&str> = words.iter().map(String::as_str).collect();
    let counts = DocCounts::new(corpus, &set);
    pair_sum(words, &counts)
}

fn pair_sum(words: &[String], counts: &DocCounts<'_>) -> f64 {
    let mut total = 0.0;
    for j in 0..words.len() {
        let dj = counts.single.get(words[j].as_str()).copied().unwrap_or(0);
        if dj == 0 {
            continue;
        }
        for i in 0..j {
            let co = counts.co(&words[i], &words[j]);
            total += ((f64::from(co) + 1.0) / f64::from(dj)).ln();
        }
    }
    total
}

/// Mean per-topic UMass coherence over each topic's first `top_n` words.
pub fn umass_coherence(top_words: &[Vec<String>], corpus: &Corpus, top_n: usize) -> f64 {
    if top_words.is_empty() {
        return 0.0;
    }
    let lists: Vec<&[String]> = top_words.iter().map(|w| &w[..w.len().min(top_n)]).collect();
    let set: HashSet<&str> = lists.iter().flat_map(|l| l.iter().map(String::as_str)).collect();
    let counts = DocCounts::new(corpus, &set);
    lists.iter().map(|l| pair_sum(l, &counts)).sum::<f64>() / lists.len() as f64
}
