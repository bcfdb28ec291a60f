//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Each token's topic is resampled from
//! `p(z = k | rest) ∝ (n_dk + α) (n_kw + β) / (n_k + Vβ)`, with the token's
//! own assignment removed from the counts. φ and θ are read from the final
//! counts with the same smoothing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Encoded, ModelError};
use crate::result::{Method, TopicModelResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    /// Symmetric document-topic prior; `None` means 50/K.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta() -> f64 {
    0.01
}

fn default_iterations() -> usize {
    1000
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig { alpha: None, beta: default_beta(), iterations: default_iterations(), seed: 0 }
    }
}

impl LdaConfig {
    pub fn alpha_for(&self, k: usize) -> f64 {
        self.alpha.unwrap_or(50.0 / k as f64)
    }

    pub fn validate(&self, k: usize) -> Result<(), ModelError> {
        let alpha = self.alpha_for(k);
        if !(alpha > 0.0 && alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(ModelError::InvalidConfig("alpha and beta must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(ModelError::InvalidConfig("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampler state, exposed so callers can inspect counts between sweeps.
pub struct GibbsSampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    n_dk: Vec<Vec<u32>>,
    n_kw: Vec<Vec<u32>>,
    n_k: Vec<u32>,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(encoded: &Encoded, k: usize, config: &LdaConfig) -> Self {
        let v = encoded.vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut n_dk = vec![vec![0u32; k]; encoded.docs.len()];
        let mut n_kw = vec![vec![0u32; v]; k];
        let mut n_k = vec![0u32; k];
        let z: Vec<Vec<usize>> = encoded
            .docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let topic = rng.random_range(0..k);
                        n_dk[d][topic] += 1;
                        n_kw[topic][w] += 1;
                        n_k[topic] += 1;
                        topic
                    })
                    .collect()
            })
            .collect();
        GibbsSampler {
            k,
            v,
            alpha: config.alpha_for(k),
            beta: config.beta,
            docs: encoded.docs.clone(),
            z,
            n_dk,
            n_kw,
            n_k,
            rng,
            weights: vec![0.0; k],
        }
    }

    /// Resamples every token once.
    pub fn sweep(&mut self) {
        let v_beta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                self.n_dk[d][old] -= 1;
                self.n_kw[old][w] -= 1;
                self.n_k[old] -= 1;

                let mut total = 0.0;
                for k in 0..self.k {
                    let p = (f64::from(self.n_dk[d][k]) + self.alpha) * (f64::from(self.n_kw[k][w]) + self.beta)
                        / (f64::from(self.n_k[k]) + v_beta);
                    total += p;
                    self.weights[k] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(self.k - 1);

                self.z[d][i] = new;
                self.n_dk[d][new] += 1;
                self.n_kw[new][w] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// `n_kw[k][w]`: tokens of term `w` assigned to topic `k`.
    pub fn topic_word_counts(&self) -> &[Vec<u32>] {
        &self.n_kw
    }

    pub fn doc_topic_counts(&self) -> &[Vec<u32>] {
        &self.n_dk
    }

    pub fn phi(&self) -> Vec<Vec<f64>> {
        let v_beta = self.v as f64 * self.beta;
        (0..self.k)
            .map(|k| {
                let denom = f64::from(self.n_k[k]) + v_beta;
                let mut row: Vec<f64> = self.n_kw[k].iter().map(|&c| (f64::from(c) + self.beta) / denom).collect();
                crate::result::normalize(&mut row);
                row
            })
            .collect()
    }

    pub fn theta(&self) -> Vec<Vec<f64>> {
        let k_alpha = self.k as f64 * self.alpha;
        self.n_dk
            .iter()
            .zip(&self.docs)
            .map(|(counts, doc)| {
                let denom = doc.len() as f64 + k_alpha;
                let mut row: Vec<f64> = counts.iter().map(|&c| (f64::from(c) + self.alpha) / denom).collect();
                crate::result::normalize(&mut row);
                row
            })
            .collect()
    }
}

pub fn run_lda(corpus: &Corpus, k: usize, config: &LdaConfig) -> Result<TopicModelResult, ModelError> {
    corpus.require(k)?;
    config.validate(k)?;
    let encoded = corpus.encode();
    let mut sampler = GibbsSampler::new(&encoded, k, config);
    for _ in 0..config.iterations {
        sampler.sweep();
    }
    let doc_ids = corpus.docs.iter().map(|d| d.source.clone()).collect();
    Ok(TopicModelResult::assemble(Method::Lda, &encoded, doc_ids, sampler.phi(), sampler.theta()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Corpus {
        let docs = ["apple banana apple", "banana cherry", "cherry apple date", "date date elder"];
        Corpus::from_tokens(docs.iter().map(|d| d.split(' ').map(str::to_owned).collect()))
    }

    #[test]
    fn single_topic_degenerates_to_unigram() {
        let corpus = small();
        let config = LdaConfig { iterations: 5, ..LdaConfig::default() };
        let r = run_lda(&corpus, 1, &config).unwrap();
        assert!(r.theta.iter().all(|row| row == &vec![1.0]));
        let counts = corpus.encode().term_counts();
        let n: u64 = counts.iter().sum();
        let v = counts.len() as f64;
        for (p, c) in r.phi[0].iter().zip(counts) {
            let expected = (c as f64 + 0.01) / (n as f64 + v * 0.01);
            assert!((p - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_are_conserved_every_sweep() {
        let corpus = small();
        let encoded = corpus.encode();
        let totals = encoded.term_counts();
        let mut s = GibbsSampler::new(&encoded, 3, &LdaConfig { seed: 4, ..LdaConfig::default() });
        for _ in 0..25 {
            s.sweep();
            for (w, &total) in totals.iter().enumerate() {
                let sum: u64 = s.topic_word_counts().iter().map(|row| u64::from(row[w])).sum();
                assert_eq!(sum, total);
            }
            for (d, doc) in encoded.docs.iter().enumerate() {
                assert_eq!(s.doc_topic_counts()[d].iter().sum::<u32>() as usize, doc.len());
            }
        }
    }

    #[test]
    fn invalid_config_and_small_corpus() {
        let corpus = small();
        assert!(matches!(run_lda(&corpus, 5, &LdaConfig::default()), Err(ModelError::CorpusTooSmall { docs: 4, k: 5 })));
        let bad = LdaConfig { beta: 0.0, ..LdaConfig::default() };
        assert!(matches!(run_lda(&corpus, 2, &bad), Err(ModelError::InvalidConfig(_))));
        let bad = LdaConfig { iterations: 0, ..LdaConfig::default() };
        assert!(run_lda(&corpus, 2, &bad).is_err());
    }

    #[test]
    fn default_alpha() {
        assert_eq!(LdaConfig::default().alpha_for(5), 10.0);
    }
}
