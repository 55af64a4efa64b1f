//! tf-idf features over encoded documents.
//!
//! tf is the in-document term count divided by `true_len`; idf uses the
//! smoothed form `ln((1 + N) / (1 + df)) + 1`; nonzero vectors are
//! L2-normalized. PAD never contributes; UNK contributes only when a
//! document contains nothing else.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{Document, PAD_ID, UNK_ID};
use crate::error::{Error, Result};

/// Sparse document vector: strictly increasing ids, strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfVector {
    pub entries: Vec<(u32, f64)>,
}

impl TfIdfVector {
    /// Dense counterpart over `dim` entries.
    pub fn densify(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for &(id, w) in &self.entries {
            out[id as usize] = w;
        }
        out
    }

    pub fn l2(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Smoothed inverse document frequencies fitted on the training split.
#[derive(Debug, Clone)]
pub struct IdfModel {
    idf: Vec<f64>,
    n_docs: usize,
}

impl IdfModel {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf_of(&self, id: u32) -> f64 {
        self.idf[id as usize]
    }

    pub fn vocab_size(&self) -> usize {
        self.idf.len()
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "n_docs\t{}", self.n_docs)?;
        for (id, v) in self.idf.iter().enumerate() {
            writeln!(w, "{id}\t{v}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<IdfModel> {
        let f = File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::data("empty idf file"))??;
        let n_docs: usize = header
            .strip_prefix("n_docs\t")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::data("idf file missing n_docs header"))?;
        let mut idf = Vec::new();
        for line in lines {
            let line = line?;
            let (id, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::data("bad idf line"))?;
            let id: usize = id.parse().map_err(|_| Error::data("bad idf id"))?;
            if id != idf.len() {
                return Err(Error::data("idf ids out of order"));
            }
            idf.push(v.parse().map_err(|_| Error::data("bad idf value"))?);
        }
        Ok(IdfModel { idf, n_docs })
    }
}

fn term_counts(doc: &Document) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for &id in &doc.ids[..doc.true_len] {
        if id != PAD_ID {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    counts
}

/// Fit document frequencies over the training split.
pub fn tfidf_fit(docs: &[Document], vocab_size: usize) -> IdfModel {
    let mut df = vec![0usize; vocab_size];
    for doc in docs {
        for (&id, _) in term_counts(doc).iter() {
            df[id as usize] += 1;
        }
    }
    let n = docs.len();
    let idf = df
        .iter()
        .enumerate()
        .map(|(id, &d)| {
            if id == PAD_ID as usize {
                0.0
            } else {
                ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0
            }
        })
        .collect();
    IdfModel { idf, n_docs: n }
}

/// tf-idf vector of one document under a fitted model. UNK is excluded
/// unless the (truncated) document consists of UNK alone.
pub fn tfidf_transform(doc: &Document, model: &IdfModel) -> Result<TfIdfVector> {
    if doc.true_len == 0 {
        return Err(Error::data("cannot featurize an empty document"));
    }
    let counts = term_counts(doc);
    if let Some((&max_id, _)) = counts.last_key_value() {
        if max_id as usize >= model.vocab_size() {
            return Err(Error::data(format!(
                "document id {max_id} outside the fitted vocabulary ({})",
                model.vocab_size()
            )));
        }
    }
    let all_unk = counts.keys().all(|&id| id == UNK_ID);
    let mut entries: Vec<(u32, f64)> = counts
        .into_iter()
        .filter(|&(id, _)| id != UNK_ID || all_unk)
        .map(|(id, c)| {
            let tf = c as f64 / doc.true_len as f64;
            (id, tf * model.idf_of(id))
        })
        .collect();
    let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in entries.iter_mut() {
            *w /= norm;
        }
    }
    Ok(TfIdfVector { entries })
}
