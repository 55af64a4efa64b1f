//! Dataset reading and the prepared-corpus directory format.
//!
//! Input datasets are one record per line, `<label><delimiter><text>`, with
//! quoted fields honored. Prepared corpora are plain TSV: encoded documents
//! (`ids<TAB>true_len<TAB>label`), a vocabulary table, the fitted idf model,
//! and a holdout split manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{
    build_vocab, encode, split_holdout, tfidf_fit, tfidf_transform, tokenize, Document, IdfModel,
    RawRecord, TfIdfVector, Vocabulary,
};
use crate::error::{Error, Result};

/// Row-level issues found while reading a dataset.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub total_rows: usize,
    /// (line number, reason) for rows that failed structural validation.
    pub malformed: Vec<(u64, String)>,
    /// Rows that parsed but produced zero tokens; they are dropped.
    pub empty_after_tokenization: usize,
}

/// Read a `<label><delimiter><text>` dataset. Malformed rows are collected
/// with their line numbers; more than 1% malformed aborts the read.
pub fn read_dataset(
    path: &Path,
    delimiter: u8,
    num_classes: usize,
) -> Result<(Vec<RawRecord>, ParseReport)> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut records = Vec::new();
    let mut report = ParseReport::default();
    for (row_idx, rec) in reader.records().enumerate() {
        report.total_rows += 1;
        let line = (row_idx + 1) as u64;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.malformed.push((line, format!("unparseable row: {e}")));
                continue;
            }
        };
        if rec.len() < 2 {
            report.malformed.push((line, "expected label and text fields".into()));
            continue;
        }
        let label = match rec[0].trim().parse::<usize>() {
            Ok(l) if l < num_classes => l,
            Ok(l) => {
                report
                    .malformed
                    .push((line, format!("label {l} >= num_classes {num_classes}")));
                continue;
            }
            Err(_) => {
                report
                    .malformed
                    .push((line, format!("bad label {:?}", &rec[0])));
                continue;
            }
        };
        // extra fields come from unquoted delimiters inside the text
        let text = rec
            .iter()
            .skip(1)
            .collect::<Vec<&str>>()
            .join(&(delimiter as char).to_string());
        let text = text.trim().to_string();
        if text.is_empty() {
            report.malformed.push((line, "empty text".into()));
            continue;
        }
        records.push(RawRecord { label, text });
    }
    if report.total_rows == 0 {
        return Err(Error::data(format!("{}: empty dataset", path.display())));
    }
    if report.malformed.len() * 100 > report.total_rows {
        let preview: Vec<String> = report
            .malformed
            .iter()
            .take(5)
            .map(|(l, r)| format!("line {l}: {r}"))
            .collect();
        return Err(Error::data(format!(
            "{}: {} of {} rows malformed (>1%): {}",
            path.display(),
            report.malformed.len(),
            report.total_rows,
            preview.join("; ")
        )));
    }
    Ok((records, report))
}

/// Which split a training-file row landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Holdout,
}

/// Encoded documents plus their tf-idf features, aligned by index.
#[derive(Debug, Clone, Default)]
pub struct Split {
    pub docs: Vec<Document>,
    pub features: Vec<TfIdfVector>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Everything downstream stages need: vocabulary, idf model, and the three
/// encoded splits.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub idf: IdfModel,
    pub num_classes: usize,
    pub max_len: usize,
    pub train: Split,
    pub holdout: Split,
    pub test: Split,
    /// (original row index in the training file, assigned split).
    pub manifest: Vec<(usize, SplitTag)>,
}

/// Tokenize, split, build the vocabulary and idf on the train portion, and
/// encode all three splits. Records with no tokens are dropped (counted in
/// the report the caller already holds).
pub fn prepare(
    train_records: &[RawRecord],
    test_records: &[RawRecord],
    num_classes: usize,
    max_len: usize,
    min_count: u64,
    holdout_fraction: f64,
    seed: u64,
) -> Result<PreparedCorpus> {
    let tokenized: Vec<(usize, usize, Vec<String>)> = train_records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let toks = tokenize(&r.text);
            (!toks.is_empty()).then_some((i, r.label, toks))
        })
        .collect();
    if tokenized.is_empty() {
        return Err(Error::data("no usable training records"));
    }
    let labels: Vec<usize> = tokenized.iter().map(|t| t.1).collect();
    let (train_idx, holdout_idx) = split_holdout(&labels, holdout_fraction, seed)?;

    let train_streams: Vec<Vec<String>> = train_idx
        .iter()
        .map(|&i| tokenized[i].2.clone())
        .collect();
    let vocab = build_vocab(&train_streams, min_count)?;

    let encode_split = |idxs: &[usize]| -> Vec<Document> {
        idxs.iter()
            .map(|&i| encode(&tokenized[i].2, &vocab, max_len, tokenized[i].1))
            .collect()
    };
    let train_docs = encode_split(&train_idx);
    let holdout_docs = encode_split(&holdout_idx);
    let test_docs: Vec<Document> = test_records
        .iter()
        .filter_map(|r| {
            let toks = tokenize(&r.text);
            (!toks.is_empty()).then(|| encode(&toks, &vocab, max_len, r.label))
        })
        .collect();

    let idf = tfidf_fit(&train_docs, vocab.size());
    let featurize = |docs: Vec<Document>| -> Result<Split> {
        let features = docs
            .iter()
            .map(|d| tfidf_transform(d, &idf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Split { docs, features })
    };

    let mut manifest: Vec<(usize, SplitTag)> = train_idx
        .iter()
        .map(|&i| (tokenized[i].0, SplitTag::Train))
        .chain(holdout_idx.iter().map(|&i| (tokenized[i].0, SplitTag::Holdout)))
        .collect();
    manifest.sort_unstable_by_key(|&(i, _)| i);

    let train = featurize(train_docs)?;
    let holdout = featurize(holdout_docs)?;
    let test = featurize(test_docs)?;
    Ok(PreparedCorpus { idf, num_classes, max_len, train, holdout, test, manifest, vocab })
}

fn write_docs(path: &Path, docs: &[Document]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        let ids: Vec<String> = d.ids.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{}\t{}\t{}", ids.join(" "), d.true_len, d.label)?;
    }
    w.flush()?;
    Ok(())
}

fn read_docs(path: &Path) -> Result<Vec<Document>> {
    let f = File::open(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let mut parts = line.split('\t');
        let (ids, true_len, label) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::data(format!(
                    "{}:{}: expected ids<TAB>true_len<TAB>label",
                    path.display(),
                    lineno + 1
                )))
            }
        };
        let ids: Vec<u32> = ids
            .split(' ')
            .map(|s| s.parse().map_err(|_| Error::data(format!("bad id {s:?}"))))
            .collect::<Result<_>>()?;
        docs.push(Document {
            ids,
            true_len: true_len
                .parse()
                .map_err(|_| Error::data("bad true_len"))?,
            label: label.parse().map_err(|_| Error::data("bad label"))?,
        });
    }
    Ok(docs)
}

/// Write the prepared-corpus directory.
pub fn write_prepared(dir: &Path, corpus: &PreparedCorpus) -> Result<()> {
    fs::create_dir_all(dir)?;
    corpus.vocab.save_tsv(&dir.join("vocab.tsv"))?;
    corpus.idf.save_tsv(&dir.join("idf.tsv"))?;
    write_docs(&dir.join("train.tsv"), &corpus.train.docs)?;
    write_docs(&dir.join("holdout.tsv"), &corpus.holdout.docs)?;
    write_docs(&dir.join("test.tsv"), &corpus.test.docs)?;
    let mut w = BufWriter::new(File::create(dir.join("split_manifest.tsv"))?);
    for &(idx, tag) in &corpus.manifest {
        let tag = match tag {
            SplitTag::Train => "train",
            SplitTag::Holdout => "holdout",
        };
        writeln!(w, "{idx}\t{tag}")?;
    }
    w.flush()?;
    let mut meta = BufWriter::new(File::create(dir.join("prepared.conf"))?);
    writeln!(meta, "num_classes = {}", corpus.num_classes)?;
    writeln!(meta, "max_len = {}", corpus.max_len)?;
    meta.flush()?;
    Ok(())
}

/// Load a prepared-corpus directory; tf-idf features are recomputed from the
/// stored idf model.
pub fn load_prepared(dir: &Path) -> Result<PreparedCorpus> {
    let meta = fs::read_to_string(dir.join("prepared.conf"))
        .map_err(|_| Error::data(format!("{}: not a prepared corpus (missing prepared.conf)", dir.display())))?;
    let mut num_classes = None;
    let mut max_len = None;
    for line in meta.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "num_classes" => num_classes = v.trim().parse().ok(),
                "max_len" => max_len = v.trim().parse().ok(),
                _ => {}
            }
        }
    }
    let num_classes =
        num_classes.ok_or_else(|| Error::data("prepared.conf missing num_classes"))?;
    let max_len = max_len.ok_or_else(|| Error::data("prepared.conf missing max_len"))?;
    let vocab = Vocabulary::load_tsv(&dir.join("vocab.tsv"))?;
    let idf = IdfModel::load_tsv(&dir.join("idf.tsv"))?;
    let featurize = |docs: Vec<Document>| -> Result<Split> {
        let features = docs
            .iter()
            .map(|d| tfidf_transform(d, &idf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Split { docs, features })
    };
    let manifest = {
        let mut rows = Vec::new();
        let f = File::open(dir.join("split_manifest.tsv"))?;
        for line in BufReader::new(f).lines() {
            let line = line?;
            if let Some((idx, tag)) = line.split_once('\t') {
                let idx: usize = idx.parse().map_err(|_| Error::data("bad manifest index"))?;
                let tag = match tag {
                    "train" => SplitTag::Train,
                    "holdout" => SplitTag::Holdout,
                    other => return Err(Error::data(format!("bad manifest tag {other:?}"))),
                };
                rows.push((idx, tag));
            }
        }
        rows
    };
    Ok(PreparedCorpus {
        train: featurize(read_docs(&dir.join("train.tsv"))?)?,
        holdout: featurize(read_docs(&dir.join("holdout.tsv"))?)?,
        test: featurize(read_docs(&dir.join("test.tsv"))?)?,
        vocab,
        idf,
        num_classes,
        max_len,
        manifest,
    })
}
