//! Deterministic synthetic fixtures: separable text corpora and Gaussian
//! point clouds. The generators double as test oracles — class membership
//! and true means are known by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::RawRecord;

/// Letter-only token `j` for class `c` (tokenizer-stable: no digits).
fn class_token(class: usize, j: usize) -> String {
    let letters = ['a', 'b', 'c', 'd', 'e', 'f', 'g', 'h'];
    let mut suffix = String::new();
    let mut v = j;
    loop {
        suffix.push(letters[v % 8]);
        v /= 8;
        if v == 0 {
            break;
        }
    }
    format!("{}{}", (b'k' + class as u8) as char, suffix)
}

/// Labeled corpus with disjoint per-class token sets: trivially separable,
/// so any functioning classifier reaches perfect accuracy.
pub fn disjoint_token_corpus(
    num_classes: usize,
    n_docs: usize,
    tokens_per_class: usize,
    seed: u64,
) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs)
        .map(|i| {
            let label = i % num_classes;
            let len = rng.random_range(3..=8);
            let words: Vec<String> = (0..len)
                .map(|_| class_token(label, rng.random_range(0..tokens_per_class)))
                .collect();
            RawRecord { label, text: words.join(" ") }
        })
        .collect()
}

/// The 200-document two-class fixture used across the training tests.
pub fn two_class_corpus(n_docs: usize, seed: u64) -> Vec<RawRecord> {
    disjoint_token_corpus(2, n_docs, 12, seed)
}

/// `k` spherical Gaussian clouds in `dim` dimensions. Mean `i` sits at
/// `separation * e_i`, so pairwise mean distances are `separation * sqrt(2)`.
/// Returns (points, true means).
pub fn gaussian_blobs(
    k: usize,
    dim: usize,
    n_per_cluster: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert!(k <= dim, "one axis per cluster mean");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut m = vec![0.0; dim];
            m[i] = separation;
            m
        })
        .collect();
    let mut points = Vec::with_capacity(k * n_per_cluster);
    for mean in &means {
        for _ in 0..n_per_cluster {
            let p: Vec<f64> = mean
                .iter()
                .map(|&m| m + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            points.push(p);
        }
    }
    (points, means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use std::collections::HashSet;

    #[test]
    fn class_token_sets_are_disjoint_and_tokenizer_stable() {
        let corpus = disjoint_token_corpus(3, 60, 10, 1);
        let mut sets: Vec<HashSet<String>> = vec![HashSet::new(); 3];
        for rec in &corpus {
            for tok in tokenize(&rec.text) {
                sets[rec.label].insert(tok);
            }
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                assert!(sets[a].is_disjoint(&sets[b]));
            }
        }
        // tokenization must not mangle synthetic tokens
        let rec = &corpus[0];
        assert_eq!(tokenize(&rec.text).join(" "), rec.text);
    }

    #[test]
    fn blobs_center_on_their_means() {
        let (points, means) = gaussian_blobs(3, 10, 50, 2.0, 0.05, 5);
        assert_eq!(points.len(), 150);
        for (c, mean) in means.iter().enumerate() {
            let cluster = &points[c * 50..(c + 1) * 50];
            for j in 0..10 {
                let avg: f64 = cluster.iter().map(|p| p[j]).sum::<f64>() / 50.0;
                assert!((avg - mean[j]).abs() < 0.05, "axis {j} drifted");
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(two_class_corpus(20, 3), two_class_corpus(20, 3));
        let (p1, _) = gaussian_blobs(2, 4, 5, 2.0, 0.1, 9);
        let (p2, _) = gaussian_blobs(2, 4, 5, 2.0, 0.1, 9);
        assert_eq!(p1, p2);
    }
}
