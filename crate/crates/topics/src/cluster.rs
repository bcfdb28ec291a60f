//! Topic clustering without embeddings: TF-IDF document vectors, truncated SVD,
//! seeded k-means, then class-based TF-IDF to describe each cluster.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Encoded, ModelError};
use crate::result::{Method, TopicModelResult};

pub const SVD_DIMS: usize = 50;
pub const KMEANS_ITERATIONS: usize = 100;

/// L2-normalized TF-IDF rows with smoothed idf, `ln((1+D)/(1+df)) + 1`.
pub fn tfidf(encoded: &Encoded) -> DMatrix<f64> {
    let (d, v) = (encoded.docs.len(), encoded.vocab.len());
    let mut m = DMatrix::<f64>::zeros(d, v);
    for (i, doc) in encoded.docs.iter().enumerate() {
        for &w in doc {
            m[(i, w)] += 1.0;
        }
    }
    let mut df = vec![0.0; v];
    for i in 0..d {
        for (w, slot) in df.iter_mut().enumerate() {
            if m[(i, w)] > 0.0 {
                *slot += 1.0;
            }
        }
    }
    for w in 0..v {
        let idf = ((1.0 + d as f64) / (1.0 + df[w])).ln() + 1.0;
        for i in 0..d {
            m[(i, w)] *= idf;
        }
    }
    for i in 0..d {
        let norm = m.row(i).norm();
        if norm > 0.0 {
            m.row_mut(i).scale_mut(1.0 / norm);
        }
    }
    m
}

/// Projects rows onto the leading `dims` right singular vectors, i.e.
/// returns `U_r Σ_r`. Uses whichever Gram matrix is smaller.
pub fn truncated_svd(x: &DMatrix<f64>, dims: usize) -> DMatrix<f64> {
    let (d, v) = x.shape();
    let r = dims.min(d).min(v);
    let small_side = if d <= v { x * x.transpose() } else { x.transpose() * x };
    let eig = SymmetricEigen::new(small_side);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = DMatrix::<f64>::zeros(d, r);
    for (col, &e) in order.iter().take(r).enumerate() {
        let lambda = eig.eigenvalues[e].max(0.0);
        let vec = eig.eigenvectors.column(e);
        if d <= v {
            // eigenvectors of X Xᵀ are the left singular vectors
            let sigma = lambda.sqrt();
            for i in 0..d {
                out[(i, col)] = vec[i] * sigma;
            }
        } else {
            let projected = x * vec;
            for i in 0..d {
                out[(i, col)] = projected[i];
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means with k-means++ initialization. Empty clusters take the
/// point farthest from its centroid among clusters with more than one
/// member, so every cluster is nonempty whenever `k ≤ n`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iterations: usize) -> Vec<usize> {
    let n = points.len();
    assert!(k >= 1 && k <= n, "need 1 <= k <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            nearest.iter().position(|&d| {
                acc += d;
                u < acc
            }).unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[next].clone());
        for (slot, p) in nearest.iter_mut().zip(points) {
            *slot = slot.min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(p, &centroids[a]).total_cmp(&sq_dist(p, &centroids[b])).then(a.cmp(&b)))
                .unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        repair_empty(points, &centroids, &mut assign, k);
        centroids = centroids_of(points, &assign, k);
        if !changed {
            break;
        }
    }
    assign
}

fn repair_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assign: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let donor = (0..points.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[assign[a]])
                    .total_cmp(&sq_dist(&points[b], &centroids[assign[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with two members");
        assign[donor] = empty;
    }
}

fn centroids_of(points: &[Vec<f64>], assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dims = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; dims]; k];
    let mut sizes = vec![0.0; k];
    for (p, &a) in points.iter().zip(assign) {
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
        sizes[a] += 1.0;
    }
    for (s, n) in sums.iter_mut().zip(sizes) {
        if n > 0.0 {
            s.iter_mut().for_each(|x| *x /= n);
        }
    }
    sums
}

/// Class-based TF-IDF: `W[t,c] = tf[t,c] · ln(1 + A / f[t])`, where `A` is
/// the average number of tokens per cluster and `f[t]` the corpus
/// frequency of `t`.
pub fn class_tfidf(encoded: &Encoded, assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let v = encoded.vocab.len();
    let mut tf = vec![vec![0.0; v]; k];
    for (doc, &c) in encoded.docs.iter().zip(assign) {
        for &w in doc {
            tf[c][w] += 1.0;
        }
    }
    let f: Vec<f64> = encoded.term_counts().into_iter().map(|c| c as f64).collect();
    let total: f64 = f.iter().sum();
    let a = total / k as f64;
    tf.into_iter()
        .map(|row| row.iter().zip(&f).map(|(t, ft)| if *ft > 0.0 { t * (1.0 + a / ft).ln() } else { 0.0 }).collect())
        .collect()
}

pub fn run_cluster_topics(corpus: &Corpus, k: usize, seed: u64) -> Result<TopicModelResult, ModelError> {
    corpus.require(k)?;
    let encoded = corpus.encode();
    let embedded = truncated_svd(&tfidf(&encoded), SVD_DIMS);
    let points: Vec<Vec<f64>> = (0..embedded.nrows()).map(|i| embedded.row(i).iter().copied().collect()).collect();
    let assign = kmeans(&points, k, seed, KMEANS_ITERATIONS);
    let mut phi = class_tfidf(&encoded, &assign, k);
    for row in &mut phi {
        crate::result::normalize(row);
    }
    let theta = assign
        .iter()
        .map(|&c| {
            let mut row = vec![0.0; k];
            row[c] = 1.0;
            row
        })
        .collect();
    let doc_ids = corpus.docs.iter().map(|d| d.source.clone()).collect();
    Ok(TopicModelResult::assemble(Method::Cluster, &encoded, doc_ids, phi, theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(docs: &[&str]) -> Corpus {
        Corpus::from_tokens(docs.iter().map(|d| d.split(' ').map(str::to_owned).collect()))
    }

    #[test]
    fn svd_preserves_gram_matrix_at_full_rank() {
        let c = corpus(&["aaa bbb", "bbb ccc ccc", "ddd aaa", "eee"]);
        let x = tfidf(&c.encode());
        let y = truncated_svd(&x, 50);
        let gx = &x * x.transpose();
        let gy = &y * y.transpose();
        assert!((gx - gy).abs().max() < 1e-9);
    }

    #[test]
    fn tall_and_wide_inputs_agree() {
        let c = corpus(&["aaa bbb", "bbb ccc", "aaa ccc ddd", "ddd", "aaa", "bbb ddd"]);
        let x = tfidf(&c.encode());
        // 6 docs × 4 terms uses the term-side Gram matrix
        let y = truncated_svd(&x, 50);
        assert_eq!(y.ncols(), 4);
        assert!(((&x * x.transpose()) - (&y * y.transpose())).abs().max() < 1e-9);
    }

    #[test]
    fn k_equal_to_n_gives_permutation() {
        let c = corpus(&["aaa", "aaa", "bbb", "ccc ddd", "ddd"]);
        let r = run_cluster_topics(&c, 5, 1).unwrap();
        let mut seen = vec![0; 5];
        for row in &r.theta {
            assert_eq!(row.iter().filter(|&&x| x == 1.0).count(), 1);
            seen[row.iter().position(|&x| x == 1.0).unwrap()] += 1;
        }
        assert_eq!(seen, vec![1; 5]);
    }

    #[test]
    fn class_tfidf_formula() {
        let c = corpus(&["aaa aaa bbb", "bbb"]);
        let e = c.encode();
        let w = class_tfidf(&e, &[0, 1], 2);
        let a = 4.0 / 2.0;
        assert!((w[0][0] - 2.0 * (1.0f64 + a / 2.0).ln()).abs() < 1e-12);
        assert!((w[1][1] - 1.0 * (1.0f64 + a / 2.0).ln()).abs() < 1e-12);
        assert_eq!(w[1][0], 0.0);
    }
}
