//! Term relevance rankings and the intertopic distance map.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::result::TopicModelResult;

/// Terms listed per topic.
pub const RELEVANCE_TERMS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub relevance: f64,
    pub phi: f64,
    /// `phi / p(w)`.
    pub lift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceView {
    pub lambda: f64,
    pub topics: Vec<Vec<RankedTerm>>,
    /// Jensen–Shannon divergence between topic-word rows.
    pub distances: Vec<Vec<f64>>,
    /// Classical MDS of `distances`.
    pub coordinates: Vec<[f64; 2]>,
    pub topic_frequencies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("lambda must lie in [0, 1], got {0}")]
pub struct LambdaOutOfRange(pub f64);

/// `λ ln φ_kw + (1 − λ) ln(φ_kw / p_w)`, the top terms per topic. Terms with
/// zero probability in a topic are not ranked for it; ties go to the
/// lexicographically smaller term.
pub fn relevance_view(result: &TopicModelResult, lambda: f64) -> Result<RelevanceView, LambdaOutOfRange> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(LambdaOutOfRange(lambda));
    }
    let topics = result
        .phi
        .iter()
        .map(|row| {
            let mut terms: Vec<RankedTerm> = row
                .iter()
                .enumerate()
                .filter(|(w, &p)| p > 0.0 && result.term_frequencies[*w] > 0.0)
                .map(|(w, &p)| {
                    let lift = p / result.term_frequencies[w];
                    RankedTerm {
                        term: result.vocab[w].clone(),
                        relevance: lambda * p.ln() + (1.0 - lambda) * lift.ln(),
                        phi: p,
                        lift,
                    }
                })
                .collect();
            terms.sort_by(|a, b| b.relevance.total_cmp(&a.relevance).then_with(|| a.term.cmp(&b.term)));
            terms.truncate(RELEVANCE_TERMS);
            terms
        })
        .collect();
    let distances = js_matrix(&result.phi);
    Ok(RelevanceView {
        lambda,
        topics,
        coordinates: classical_mds(&distances),
        distances,
        topic_frequencies: result.topic_frequencies.clone(),
    })
}

fn kl(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

/// Natural-log Jensen–Shannon divergence.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).max(0.0)
}

fn js_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = jensen_shannon(&rows[i], &rows[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Two-dimensional principal coordinates of a distance matrix.
pub fn classical_mds(distances: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let k = distances.len();
    if k == 0 {
        return Vec::new();
    }
    let d2 = DMatrix::from_fn(k, k, |i, j| distances[i][j] * distances[i][j]);
    let j = DMatrix::<f64>::identity(k, k) - DMatrix::from_element(k, k, 1.0 / k as f64);
    let b = -0.5 * &j * d2 * &j;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let mut coords = vec![[0.0; 2]; k];
    for (dim, &e) in order.iter().take(2).enumerate() {
        let scale = eig.eigenvalues[e].max(0.0).sqrt();
        for (i, c) in coords.iter_mut().enumerate() {
            c[dim] = eig.eigenvectors[(i, e)] * scale;
        }
    }
    coords
}
