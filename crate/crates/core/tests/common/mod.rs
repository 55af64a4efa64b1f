//! Shared fixtures for the integration suites.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clue_core::clustering::kmeans_init;
use clue_core::corpus::{prepare, random_embeddings, synth, PreparedCorpus, RawRecord};
use clue_core::error::Result;
use clue_core::model::{Batch, ClueConfig, ClueModel, ScoreKind, Variant};

/// Embedding width for the desk-scale benchmark runs.
pub const DESK_D: usize = 100;

/// Two-class disjoint-token corpus plus a small model sized for it.
pub fn toy_model_and_corpus(variant: Variant, seed: u64) -> (ClueModel, PreparedCorpus) {
    let records = synth::two_class_corpus(200, seed);
    let test = synth::two_class_corpus(60, seed + 1);
    let corpus = prepare(&records, &test, 2, 10, 2, 0.10, seed).unwrap();
    let d = 8;
    let emb = random_embeddings(corpus.vocab.size(), d, seed);
    let rows: Vec<Vec<f64>> = (2..corpus.vocab.size())
        .map(|id| emb.row(id as u32).to_vec())
        .collect();
    let centroids = kmeans_init(&rows, 2, seed, 50, 1e-6).unwrap();
    let config = ClueConfig {
        variant,
        k: 2,
        n_layers: 1,
        d,
        d_prime: d,
        d_hidden: 16,
        score_kind: ScoreKind::Dot,
        lambda1: 0.1,
        lambda2: if variant == Variant::Baseline { 0.0 } else { 0.1 },
        lambda3: if variant == Variant::Cvae { 0.1 } else { 0.0 },
        alpha: 1.0,
        dropout_rate: 0.2,
        max_len: 10,
    };
    let model = ClueModel::new(config, 2, &emb, &centroids, seed).unwrap();
    (model, corpus)
}

/// Deterministic two-document cvae fixture small enough for full-parameter
/// finite differencing.
pub fn tiny_joint_fixture(seed: u64) -> (ClueModel, Batch) {
    use clue_core::clustering::{Centroids, InitMethod};
    use clue_core::corpus::{Document, Split, TfIdfVector};

    let vocab_size = 8;
    let d = 4;
    let config = ClueConfig {
        variant: Variant::Cvae,
        k: 2,
        n_layers: 2,
        d,
        d_prime: 3,
        d_hidden: 5,
        score_kind: ScoreKind::Dot,
        lambda1: 0.7,
        lambda2: 0.5,
        lambda3: 0.3,
        alpha: 1.0,
        dropout_rate: 0.2, // unused under FrozenNoise
        max_len: 4,
    };
    let emb = random_embeddings(vocab_size, d, seed);
    let centroids = Centroids {
        k: 2,
        dim: d,
        weights: vec![0.2, -0.1, 0.3, 0.05, -0.25, 0.15, -0.05, 0.4],
        init_method: InitMethod::KMeans,
    };
    let model = ClueModel::new(config, 2, &emb, &centroids, seed).unwrap();

    let docs = vec![
        Document { ids: vec![2, 5, 3, 0], true_len: 3, label: 0 },
        Document { ids: vec![6, 4, 0, 0], true_len: 2, label: 1 },
    ];
    let split = Split {
        features: vec![
            TfIdfVector { entries: vec![(2, 0.6), (3, 0.5), (5, 0.62)] },
            TfIdfVector { entries: vec![(4, 0.8), (6, 0.6)] },
        ],
        docs,
    };
    let batch = Batch::from_split(&split, &[0, 1], vocab_size, 2, true).unwrap();
    (model, batch)
}

fn find_data_dir(env_key: &str, name: &str) -> Option<PathBuf> {
    if let Ok(dir) = std::env::var(env_key) {
        let p = PathBuf::from(dir);
        if p.is_dir() {
            return Some(p);
        }
    }
    for base in ["data", "../../data"] {
        let p = PathBuf::from(base).join(name);
        if p.is_dir() {
            return Some(p);
        }
    }
    None
}

/// R8 in the `label<TAB>text` all-terms format. Labels map to 0..8 in sorted
/// order.
pub fn load_r8() -> Option<(Vec<RawRecord>, Vec<RawRecord>)> {
    let dir = find_data_dir("CLUE_R8_DIR", "r8")?;
    let read = |file: &str| -> Option<Vec<(String, String)>> {
        let text = fs::read_to_string(dir.join(file)).ok()?;
        Some(
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .filter_map(|l| {
                    let (label, body) = l.split_once('\t')?;
                    Some((label.trim().to_string(), body.trim().to_string()))
                })
                .collect(),
        )
    };
    let train = read("r8-train-all-terms.txt")?;
    let test = read("r8-test-all-terms.txt")?;
    let mut classes: Vec<String> = train.iter().map(|(l, _)| l.clone()).collect();
    classes.sort();
    classes.dedup();
    let index: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let convert = |rows: Vec<(String, String)>| -> Vec<RawRecord> {
        rows.into_iter()
            .filter_map(|(label, text)| {
                Some(RawRecord { label: *index.get(label.as_str())?, text })
            })
            .collect()
    };
    Some((convert(train), convert(test)))
}

/// AG's News CSVs (`"class","title","description"`, classes 1-4); titles only.
pub fn load_ag_news_titles() -> Option<(Vec<RawRecord>, Vec<RawRecord>)> {
    let dir = find_data_dir("CLUE_AG_NEWS_DIR", "ag_news")?;
    let read = |file: &str| -> Option<Vec<RawRecord>> {
        let f = fs::File::open(dir.join(file)).ok()?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(f);
        let mut out = Vec::new();
        for rec in reader.records().flatten() {
            if rec.len() < 2 {
                continue;
            }
            let class: usize = rec[0].trim().parse().ok()?;
            if !(1..=4).contains(&class) {
                return None;
            }
            out.push(RawRecord { label: class - 1, text: rec[1].to_string() });
        }
        Some(out)
    };
    Some((read("train.csv")?, read("test.csv")?))
}

/// Window-`w` moving average of a loss sequence.
#[allow(dead_code)]
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    values
        .windows(w)
        .map(|win| win.iter().sum::<f64>() / w as f64)
        .collect()
}

#[allow(dead_code)]
pub fn must<T>(r: Result<T>) -> T {
    match r {
        Ok(v) => v,
        Err(e) => panic!("unexpected error: {e}"),
    }
}
