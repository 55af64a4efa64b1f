//! Command implementations: prepare, init-centroids, train, eval, export,
//! sweep.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use clue_core::autodiff::Tape;
use clue_core::clustering::{gmm_init, kmeans_init, Centroids, InitMethod};
use clue_core::corpus::{
    load_embeddings, load_prepared, prepare, random_embeddings, read_dataset, write_prepared,
    EmbeddingTable, PreparedCorpus, Split, Vocabulary,
};
use clue_core::error::{Error, Result};
use clue_core::model::{Batch, ClueModel, Mode, Variant};
use clue_core::training::{evaluate, train, write_metric_log, MetricRow};

use crate::config::RunConfig;

fn embeddings_for(cfg: &RunConfig, vocab: &Vocabulary) -> Result<EmbeddingTable> {
    if cfg.embeddings_path.is_empty() {
        Ok(random_embeddings(vocab.size(), cfg.d, cfg.seed))
    } else {
        load_embeddings(Path::new(&cfg.embeddings_path), vocab, cfg.d, cfg.seed)
    }
}

fn split_of<'a>(corpus: &'a PreparedCorpus, name: &str) -> Result<&'a Split> {
    match name {
        "train" => Ok(&corpus.train),
        "holdout" => Ok(&corpus.holdout),
        "test" => Ok(&corpus.test),
        other => Err(Error::config(format!(
            "unknown split {other:?} (expected train, holdout, or test)"
        ))),
    }
}

fn load_model_against(cfg: &RunConfig, corpus: &PreparedCorpus) -> Result<ClueModel> {
    let model = ClueModel::load_checkpoint(&cfg.effective_checkpoint_dir())?;
    if model.vocab_size != corpus.vocab.size() {
        return Err(Error::config(format!(
            "checkpoint vocabulary ({}) does not match prepared corpus ({})",
            model.vocab_size,
            corpus.vocab.size()
        )));
    }
    Ok(model)
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    if cfg.train_path.is_empty() {
        return Err(Error::config("prepare requires train_path"));
    }
    if cfg.num_classes < 2 {
        return Err(Error::config("prepare requires num_classes >= 2"));
    }
    let delim = cfg.delimiter_byte()?;
    let (train_records, report) = read_dataset(Path::new(&cfg.train_path), delim, cfg.num_classes)?;
    for (line, reason) in &report.malformed {
        eprintln!("warning: {}:{line}: {reason}", cfg.train_path);
    }
    let (test_records, test_report) = if cfg.test_path.is_empty() {
        (Vec::new(), Default::default())
    } else {
        read_dataset(Path::new(&cfg.test_path), delim, cfg.num_classes)?
    };
    for (line, reason) in &test_report.malformed {
        eprintln!("warning: {}:{line}: {reason}", cfg.test_path);
    }

    let corpus = prepare(
        &train_records,
        &test_records,
        cfg.num_classes,
        cfg.max_len,
        cfg.min_count,
        cfg.holdout_fraction,
        cfg.seed,
    )?;
    let dropped = train_records.len() - corpus.train.len() - corpus.holdout.len();
    let dir = Path::new(&cfg.prepared_dir);
    write_prepared(dir, &corpus)?;
    cfg.write_resolved(&dir.join("resolved.conf"))?;
    println!(
        "prepared {} train / {} holdout / {} test documents (vocabulary {}, {} dropped as token-empty)",
        corpus.train.len(),
        corpus.holdout.len(),
        corpus.test.len(),
        corpus.vocab.size(),
        dropped
    );
    Ok(())
}

pub fn cmd_init_centroids(cfg: &RunConfig) -> Result<()> {
    let corpus = load_prepared(Path::new(&cfg.prepared_dir))?;
    let table = embeddings_for(cfg, &corpus.vocab)?;
    // cluster real-token rows only (PAD and UNK carry no lexical meaning)
    let rows: Vec<Vec<f64>> = (2..corpus.vocab.size())
        .map(|id| table.row(id as u32).to_vec())
        .collect();
    if rows.len() < cfg.k {
        return Err(Error::data(format!(
            "k = {} exceeds the usable vocabulary size {}",
            cfg.k,
            rows.len()
        )));
    }
    let method: InitMethod = cfg.init_method.parse()?;
    let centroids = match method {
        InitMethod::KMeans => kmeans_init(&rows, cfg.k, cfg.seed, 100, 1e-6)?,
        InitMethod::Gmm => gmm_init(&rows, cfg.k, cfg.seed, 100)?,
    };
    let path = cfg.effective_centroids_path();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    centroids.save_tsv(&path)?;
    cfg.write_resolved(&path.with_extension("resolved.conf"))?;
    println!(
        "initialized {} centroids ({}) over {} embedding rows -> {}",
        cfg.k,
        cfg.init_method,
        rows.len(),
        path.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let corpus = load_prepared(Path::new(&cfg.prepared_dir))?;
    let centroids = Centroids::load_tsv(&cfg.effective_centroids_path())?;
    let table = embeddings_for(cfg, &corpus.vocab)?;
    let model_cfg = cfg.model_config(corpus.max_len)?;
    let model = ClueModel::new(model_cfg, corpus.num_classes, &table, &centroids, cfg.seed)?;

    let outcome = train(&model, &corpus, &cfg.train_config())?;
    let out_dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(out_dir)?;
    model.save_checkpoint(&cfg.effective_checkpoint_dir())?;

    let mut log = outcome.log;
    let test_accuracy = if corpus.test.is_empty() {
        None
    } else {
        let m = evaluate(&model, &corpus.test, cfg.batch_size)?;
        log.push(MetricRow { step: outcome.best_step, split: "test".into(), metrics: m });
        Some(m.accuracy)
    };
    write_metric_log(&out_dir.join("metrics.tsv"), &log)?;
    cfg.write_resolved(&out_dir.join("resolved.conf"))?;

    println!(
        "trained {} steps; best holdout accuracy {} at step {}{}",
        outcome.steps_run,
        outcome.best_accuracy,
        outcome.best_step,
        match test_accuracy {
            Some(a) => format!("; test accuracy {a}"),
            None => String::new(),
        }
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let corpus = load_prepared(Path::new(&cfg.prepared_dir))?;
    let model = load_model_against(cfg, &corpus)?;
    let split = split_of(&corpus, &cfg.eval_split)?;
    let m = evaluate(&model, split, cfg.batch_size)?;
    println!("split\taccuracy\tloss_cls\tloss_cluster\tloss_recon\tloss_kld");
    println!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        cfg.eval_split, m.accuracy, m.loss_cls, m.loss_cluster, m.loss_recon, m.loss_kld
    );
    Ok(())
}

pub fn cmd_export(cfg: &RunConfig) -> Result<()> {
    let corpus = load_prepared(Path::new(&cfg.prepared_dir))?;
    let model = load_model_against(cfg, &corpus)?;
    let out_dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(out_dir)?;
    match cfg.export_what.as_str() {
        "embeddings" => export_sentence_embeddings(cfg, &model, &corpus, out_dir)?,
        "centroids" => {
            let shape = model.centroids.shape();
            let c = Centroids {
                k: shape[0],
                dim: shape[1],
                weights: model.centroids.to_vec(),
                init_method: InitMethod::KMeans,
            };
            c.save_tsv(&out_dir.join("centroids.tsv"))?;
        }
        "alignments" => export_alignments(cfg, &model, &corpus, out_dir)?,
        "latents" => export_latents(cfg, &model, &corpus, out_dir)?,
        other => {
            return Err(Error::config(format!(
                "unknown export {other:?} (expected embeddings, centroids, alignments, or latents)"
            )))
        }
    }
    cfg.write_resolved(&out_dir.join("resolved.conf"))?;
    Ok(())
}

fn forward_split_batches(
    model: &ClueModel,
    corpus: &PreparedCorpus,
    split: &Split,
    batch_size: usize,
    mut on_batch: impl FnMut(&[usize], &Batch, &clue_core::model::BatchOutput) -> Result<()>,
) -> Result<()> {
    if split.is_empty() {
        return Err(Error::data("export on an empty split"));
    }
    let needs_features = model.config.variant != Variant::Baseline;
    let idxs: Vec<usize> = (0..split.len()).collect();
    for chunk in idxs.chunks(batch_size) {
        let batch = Batch::from_split(
            split,
            chunk,
            corpus.vocab.size(),
            corpus.num_classes,
            needs_features,
        )?;
        let tape = Tape::inactive();
        let out = model.forward(&tape, &batch, Mode::Eval)?;
        on_batch(chunk, &batch, &out)?;
    }
    Ok(())
}

/// One row per document: `doc_index<TAB>label<TAB>o...` (pooled vector).
fn export_sentence_embeddings(
    cfg: &RunConfig,
    model: &ClueModel,
    corpus: &PreparedCorpus,
    out_dir: &Path,
) -> Result<()> {
    let split = split_of(corpus, &cfg.export_split)?;
    let mut w = BufWriter::new(File::create(out_dir.join("sentence_embeddings.tsv"))?);
    forward_split_batches(model, corpus, split, cfg.batch_size, |chunk, batch, out| {
        let pooled = out.pooled.to_vec();
        let width = out.pooled.shape()[1];
        for (row, (&idx, doc)) in chunk.iter().zip(&batch.docs).enumerate() {
            let vals: Vec<String> = pooled[row * width..(row + 1) * width]
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            writeln!(w, "{idx}\t{}\t{}", doc.label, vals.join("\t"))?;
        }
        Ok(())
    })?;
    w.flush()?;
    println!(
        "wrote sentence embeddings for {} {} documents",
        split.len(),
        cfg.export_split
    );
    Ok(())
}

/// One `K x T` TSV per interaction layer for the selected document, with the
/// document's tokens as column headers.
fn export_alignments(
    cfg: &RunConfig,
    model: &ClueModel,
    corpus: &PreparedCorpus,
    out_dir: &Path,
) -> Result<()> {
    let split = split_of(corpus, &cfg.export_split)?;
    if cfg.export_doc >= split.len() {
        return Err(Error::config(format!(
            "export_doc {} out of range for split {} ({} documents)",
            cfg.export_doc,
            cfg.export_split,
            split.len()
        )));
    }
    let needs_features = model.config.variant != Variant::Baseline;
    let batch = Batch::from_split(
        split,
        &[cfg.export_doc],
        corpus.vocab.size(),
        corpus.num_classes,
        needs_features,
    )?;
    let tape = Tape::inactive();
    let out = model.forward(&tape, &batch, Mode::Eval)?;
    let doc = &batch.docs[0];
    let tokens: Vec<&str> = doc.ids[..doc.true_len]
        .iter()
        .map(|&id| corpus.vocab.token_of(id))
        .collect();
    for (layer, a) in out.alignments[0].iter().enumerate() {
        let shape = a.shape(); // [T, K]
        let (t_len, k) = (shape[0], shape[1]);
        let values = a.to_vec();
        let path = out_dir.join(format!("alignments_layer{layer}.tsv"));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", tokens.join("\t"))?;
        for cluster in 0..k {
            let row: Vec<String> = (0..t_len)
                .map(|t| format!("{}", values[t * k + cluster]))
                .collect();
            writeln!(w, "{}", row.join("\t"))?;
        }
        w.flush()?;
    }
    println!(
        "wrote {} alignment layers for document {} ({} tokens)",
        out.alignments[0].len(),
        cfg.export_doc,
        tokens.len()
    );
    Ok(())
}

/// One row per document: `doc_index<TAB>mu...<TAB>z...`. Eval mode, so the
/// variational latent collapses to its mean; the deterministic autoencoder
/// reports its code in both column groups.
fn export_latents(
    cfg: &RunConfig,
    model: &ClueModel,
    corpus: &PreparedCorpus,
    out_dir: &Path,
) -> Result<()> {
    if model.config.variant == Variant::Baseline {
        return Err(Error::config(
            "the baseline variant has no latent branch to export",
        ));
    }
    let split = split_of(corpus, &cfg.export_split)?;
    let mut w = BufWriter::new(File::create(out_dir.join("latents.tsv"))?);
    forward_split_batches(model, corpus, split, cfg.batch_size, |chunk, _batch, out| {
        let z = out.z.to_vec();
        let mu = out
            .latent
            .as_ref()
            .map(|s| s.mu.to_vec())
            .unwrap_or_else(|| z.clone());
        let width = out.z.shape()[1];
        for (row, &idx) in chunk.iter().enumerate() {
            let fmt = |v: &[f64]| -> String {
                v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join("\t")
            };
            writeln!(
                w,
                "{idx}\t{}\t{}",
                fmt(&mu[row * width..(row + 1) * width]),
                fmt(&z[row * width..(row + 1) * width])
            )?;
        }
        Ok(())
    })?;
    w.flush()?;
    println!("wrote latents for {} {} documents", split.len(), cfg.export_split);
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let values: Vec<usize> = cfg
        .sweep_values
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad sweep value {s:?}")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::config("sweep_values must list at least one value"));
    }
    if values.iter().any(|&v| v == 0) {
        return Err(Error::config("sweep values must be positive"));
    }
    if cfg.sweep_axis != "clusters" && cfg.sweep_axis != "layers" {
        return Err(Error::config(format!(
            "unknown sweep axis {:?} (expected clusters or layers)",
            cfg.sweep_axis
        )));
    }

    let corpus = load_prepared(Path::new(&cfg.prepared_dir))?;
    let table = embeddings_for(cfg, &corpus.vocab)?;
    let rows: Vec<Vec<f64>> = (2..corpus.vocab.size())
        .map(|id| table.row(id as u32).to_vec())
        .collect();
    let method: InitMethod = cfg.init_method.parse()?;

    let mut results = Vec::with_capacity(values.len());
    for &value in &values {
        let mut run_cfg = cfg.clone();
        match cfg.sweep_axis.as_str() {
            "clusters" => run_cfg.k = value,
            _ => run_cfg.n_layers = value,
        }
        if rows.len() < run_cfg.k {
            return Err(Error::data(format!(
                "k = {} exceeds the usable vocabulary size {}",
                run_cfg.k,
                rows.len()
            )));
        }
        let centroids = match method {
            InitMethod::KMeans => kmeans_init(&rows, run_cfg.k, cfg.seed, 100, 1e-6)?,
            InitMethod::Gmm => gmm_init(&rows, run_cfg.k, cfg.seed, 100)?,
        };
        let model_cfg = run_cfg.model_config(corpus.max_len)?;
        let model = ClueModel::new(model_cfg, corpus.num_classes, &table, &centroids, cfg.seed)?;
        let outcome = train(&model, &corpus, &run_cfg.train_config())?;
        let test = evaluate(&model, &corpus.test, cfg.batch_size)?;
        println!(
            "{} = {value}: holdout {} (step {}), test {}",
            cfg.sweep_axis, outcome.best_accuracy, outcome.best_step, test.accuracy
        );
        results.push((value, test.accuracy));
    }

    let out_dir = Path::new(&cfg.out_dir);
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("sweep_{}.tsv", cfg.sweep_axis));
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "value\ttest_accuracy")?;
    for (value, acc) in &results {
        writeln!(w, "{value}\t{acc}")?;
    }
    w.flush()?;
    cfg.write_resolved(&out_dir.join("resolved.conf"))?;
    println!("wrote {}", path.display());
    Ok(())
}

