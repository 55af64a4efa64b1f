//! Corpus ingestion: tokenization, vocabulary, encoded documents, tf-idf
//! features, pretrained embeddings, and deterministic splits.

mod embeddings;
mod io;
pub mod synth;
mod tfidf;
mod tokenize;
mod vocab;

pub use embeddings::{load_embeddings, random_embeddings, EmbeddingTable};
pub use io::{
    load_prepared, prepare, read_dataset, write_prepared, ParseReport, PreparedCorpus, Split,
    SplitTag,
};
pub use tfidf::{tfidf_fit, tfidf_transform, IdfModel, TfIdfVector};
pub use tokenize::{tokenize, NUM_TOKEN, URL_TOKEN};
pub use vocab::{build_vocab, Vocabulary, PAD_ID, UNK_ID};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One labeled input text.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 0-based class index.
    pub label: usize,
    pub text: String,
}

/// Fixed-length encoded document: ids are right-padded with PAD up to the
/// configured maximum length; `true_len` counts the real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub ids: Vec<u32>,
    pub true_len: usize,
    pub label: usize,
}

impl Document {
    /// One-hot label vector over `num_classes` entries.
    pub fn one_hot(&self, num_classes: usize) -> Vec<f64> {
        let mut y = vec![0.0; num_classes];
        y[self.label] = 1.0;
        y
    }
}

/// Encode a token sequence: OOV tokens map to UNK, sequences are truncated
/// to `max_len` and right-padded with PAD.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize, label: usize) -> Document {
    assert!(max_len >= 1, "max_len must be at least 1");
    let true_len = tokens.len().min(max_len);
    let mut ids: Vec<u32> = tokens[..true_len].iter().map(|t| vocab.id_of(t)).collect();
    ids.resize(max_len, PAD_ID);
    Document { ids, true_len, label }
}

/// Inverse of `encode` up to UNK substitution and truncation.
pub fn decode(doc: &Document, vocab: &Vocabulary) -> Vec<String> {
    doc.ids[..doc.true_len]
        .iter()
        .map(|&id| vocab.token_of(id).to_string())
        .collect()
}

/// Label-stratified holdout split. Returns (train, holdout) index lists in
/// ascending original order; per class the holdout size is the rounded
/// fraction, capped so at least one sample stays in train.
pub fn split_holdout(
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
        return Err(Error::config(format!(
            "holdout fraction {fraction} must be in (0, 1)"
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (class, mut idxs) in by_class.into_iter().enumerate() {
        if idxs.is_empty() {
            continue;
        }
        if idxs.len() < 2 {
            return Err(Error::data(format!(
                "class {class} has {} sample(s); need at least 2 to stratify",
                idxs.len()
            )));
        }
        idxs.shuffle(&mut rng);
        let want = (fraction * idxs.len() as f64).round() as usize;
        let take = want.min(idxs.len() - 1);
        holdout.extend_from_slice(&idxs[..take]);
        train.extend_from_slice(&idxs[take..]);
    }
    train.sort_unstable();
    holdout.sort_unstable();
    Ok((train, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_from(tokens: &[&str]) -> Vocabulary {
        // each token appears often enough to survive any threshold
        let stream: Vec<Vec<String>> = (0..10)
            .map(|_| tokens.iter().map(|t| t.to_string()).collect())
            .collect();
        build_vocab(&stream, 3).unwrap()
    }

    #[test]
    fn encode_pads_and_records_true_len() {
        let vocab = vocab_from(&["a", "b", "c"]);
        let tokens: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let doc = encode(&tokens, &vocab, 5, 0);
        assert_eq!(doc.true_len, 3);
        assert_eq!(doc.ids.len(), 5);
        assert_eq!(&doc.ids[3..], &[PAD_ID, PAD_ID]);
        assert!(doc.ids[..3].iter().all(|&id| id >= 2));
    }

    #[test]
    fn encode_truncates_to_max_len() {
        let vocab = vocab_from(&["a"]);
        let tokens: Vec<String> = std::iter::repeat("a".to_string()).take(25).collect();
        let doc = encode(&tokens, &vocab, 20, 1);
        assert_eq!(doc.true_len, 20);
        assert_eq!(doc.ids.len(), 20);
    }

    #[test]
    fn unknown_token_maps_to_unk() {
        let vocab = vocab_from(&["a"]);
        let tokens = vec!["zzz".to_string()];
        let doc = encode(&tokens, &vocab, 4, 0);
        assert_eq!(doc.ids[0], UNK_ID);
    }

    #[test]
    fn one_hot_has_single_one() {
        let doc = Document { ids: vec![2], true_len: 1, label: 2 };
        let y = doc.one_hot(4);
        assert_eq!(y, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        // 100 samples, 2 balanced classes -> 90/10 with 45/5 per class
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let (train, holdout) = split_holdout(&labels, 0.10, 9).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(holdout.len(), 10);
        for class in 0..2 {
            assert_eq!(holdout.iter().filter(|&&i| labels[i] == class).count(), 5);
            assert_eq!(train.iter().filter(|&&i| labels[i] == class).count(), 45);
        }
        let again = split_holdout(&labels, 0.10, 9).unwrap();
        assert_eq!((train, holdout), again);
    }

    #[test]
    fn split_rejects_singleton_class() {
        let labels = vec![0, 0, 0, 1];
        assert!(split_holdout(&labels, 0.10, 1).is_err());
    }

    #[test]
    fn decode_round_trips_kept_tokens() {
        let vocab = vocab_from(&["cat", "dog"]);
        let tokens: Vec<String> = ["cat", "dog", "cat"].iter().map(|s| s.to_string()).collect();
        let doc = encode(&tokens, &vocab, 8, 0);
        assert_eq!(decode(&doc, &vocab), tokens);
    }
}
