//! Training: Adam with global-norm gradient clipping, seeded batch
//! shuffling, periodic holdout evaluation with early stopping, and the
//! metric log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::corpus::{PreparedCorpus, Split};
use crate::error::{Error, Result};
use crate::model::{Batch, ClueModel, Mode, Variant};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Consecutive non-improving holdout evaluations tolerated before
    /// stopping.
    pub patience: usize,
    pub clip_norm: f64,
    /// Steps between holdout evaluations.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_steps: 10_000,
            patience: 30,
            clip_norm: 5.0,
            eval_every: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return Err(Error::config(
                "batch_size, max_steps, and eval_every must be positive",
            ));
        }
        if self.patience < 1 {
            return Err(Error::config("patience must be at least 1"));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::config("clip_norm must be positive"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam over a fixed parameter list.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(params: &[(String, Tensor)]) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            v: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            step: 0,
        }
    }

    /// One update from the gradients currently held by the parameters.
    pub fn step(&mut self, params: &[(String, Tensor)], learning_rate: f64) {
        assert!(self.step < u64::MAX, "step counter overflow");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (_, t)) in params.iter().enumerate() {
            let grad = t.grad_to_vec().unwrap_or_else(|| vec![0.0; t.numel()]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            t.with_values_mut(|values| {
                for j in 0..values.len() {
                    let g = grad[j];
                    m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                    v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    values[j] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            });
        }
    }
}

/// Scale every gradient by `clip_norm / g` when the global L2 norm `g`
/// exceeds `clip_norm`. Returns the pre-clip norm. A non-finite gradient
/// aborts with a diagnostic naming the parameter block.
pub fn clip_gradients(params: &[(String, Tensor)], clip_norm: f64) -> Result<f64> {
    let mut total_sq = 0.0;
    for (name, t) in params {
        if let Some(g) = t.grad() {
            for &v in g.iter() {
                if !v.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite gradient in parameter block {name:?}"
                    )));
                }
                total_sq += v * v;
            }
        }
    }
    let norm = total_sq.sqrt();
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for (_, t) in params {
            t.with_grad_mut(|g| g.iter_mut().for_each(|v| *v *= scale));
        }
    }
    Ok(norm)
}

/// Holdout/test metrics: accuracy plus per-term loss means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub loss_cls: f64,
    pub loss_cluster: f64,
    pub loss_recon: f64,
    pub loss_kld: f64,
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub step: usize,
    pub split: String,
    pub metrics: Metrics,
}

/// `step<TAB>split<TAB>accuracy<TAB>loss_cls<TAB>loss_cluster<TAB>loss_recon<TAB>loss_kld`
pub fn write_metric_log(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "step\tsplit\taccuracy\tloss_cls\tloss_cluster\tloss_recon\tloss_kld")?;
    for r in rows {
        let m = r.metrics;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.step, r.split, m.accuracy, m.loss_cls, m.loss_cluster, m.loss_recon, m.loss_kld
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluate a split in eval mode (dropout off, z = mu). Never mutates
/// parameters.
pub fn evaluate(model: &ClueModel, split: &Split, batch_size: usize) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::data("evaluate on an empty dataset"));
    }
    let needs_features = model.config.variant != Variant::Baseline;
    let idxs: Vec<usize> = (0..split.len()).collect();
    let mut correct = 0usize;
    let mut sums = [0.0f64; 4];
    for chunk in idxs.chunks(batch_size) {
        let batch = Batch::from_split(split, chunk, model.vocab_size, model.num_classes, needs_features)?;
        let tape = Tape::inactive();
        let out = model.forward(&tape, &batch, Mode::Eval)?;
        let loss = model.joint_loss(&tape, &out, &batch)?;
        for (pred, doc) in ClueModel::predictions(&out.logits).iter().zip(&batch.docs) {
            if *pred == doc.label {
                correct += 1;
            }
        }
        let n = chunk.len() as f64;
        sums[0] += loss.cls * n;
        sums[1] += loss.cluster * n;
        sums[2] += loss.recon * n;
        sums[3] += loss.kld * n;
    }
    let total = split.len() as f64;
    Ok(Metrics {
        accuracy: correct as f64 / total,
        loss_cls: sums[0] / total,
        loss_cluster: sums[1] / total,
        loss_recon: sums[2] / total,
        loss_kld: sums[3] / total,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<MetricRow>,
    /// Joint training loss at every step, in step order.
    pub step_losses: Vec<f64>,
    pub best_step: usize,
    pub best_accuracy: f64,
    pub steps_run: usize,
    pub stopped_early: bool,
}

struct RunningMean {
    correct: usize,
    docs: usize,
    sums: [f64; 4],
    batches: usize,
}

impl RunningMean {
    fn new() -> Self {
        RunningMean { correct: 0, docs: 0, sums: [0.0; 4], batches: 0 }
    }

    fn metrics(&self) -> Metrics {
        let b = self.batches.max(1) as f64;
        Metrics {
            accuracy: self.correct as f64 / self.docs.max(1) as f64,
            loss_cls: self.sums[0] / b,
            loss_cluster: self.sums[1] / b,
            loss_recon: self.sums[2] / b,
            loss_kld: self.sums[3] / b,
        }
    }
}

/// Train with shuffled minibatches, gradient clipping, Adam, and early
/// stopping on holdout accuracy. The model is left holding the best
/// checkpoint's parameters.
pub fn train(model: &ClueModel, corpus: &PreparedCorpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::data("empty training set"));
    }
    if corpus.holdout.is_empty() {
        return Err(Error::data("empty holdout set"));
    }
    if model.vocab_size != corpus.vocab.size() {
        return Err(Error::config(format!(
            "model vocabulary ({}) does not match corpus vocabulary ({})",
            model.vocab_size,
            corpus.vocab.size()
        )));
    }
    if model.num_classes != corpus.num_classes {
        return Err(Error::config("model/corpus class count mismatch"));
    }

    let needs_features = model.config.variant != Variant::Baseline;
    let params = model.params();
    let mut adam = Adam::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(2);

    let mut log: Vec<MetricRow> = Vec::new();
    let mut step_losses: Vec<f64> = Vec::new();
    let mut best: Option<(Vec<Vec<f64>>, usize, f64, f64)> = None; // snapshot, step, acc, cls
    let mut bad_evals = 0usize;
    let mut step = 0usize;
    let mut stopped_early = false;
    let mut window = RunningMean::new();

    'outer: loop {
        let mut idxs: Vec<usize> = (0..corpus.train.len()).collect();
        idxs.shuffle(&mut shuffle_rng);
        for chunk in idxs.chunks(cfg.batch_size) {
            step += 1;
            let batch = Batch::from_split(
                &corpus.train,
                chunk,
                model.vocab_size,
                model.num_classes,
                needs_features,
            )?;
            model.zero_grads();
            let tape = Tape::new();
            let out = model.forward(&tape, &batch, Mode::Train(&mut noise_rng))?;
            let loss = model.joint_loss(&tape, &out, &batch)?;
            let total = loss.total.item();
            if !total.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite training loss at step {step}"
                )));
            }
            step_losses.push(total);
            for (pred, doc) in ClueModel::predictions(&out.logits).iter().zip(&batch.docs) {
                if *pred == doc.label {
                    window.correct += 1;
                }
            }
            window.docs += chunk.len();
            window.sums[0] += loss.cls;
            window.sums[1] += loss.cluster;
            window.sums[2] += loss.recon;
            window.sums[3] += loss.kld;
            window.batches += 1;

            tape.backward(&loss.total)?;
            clip_gradients(&params, cfg.clip_norm)?;
            adam.step(&params, cfg.learning_rate);

            if step % cfg.eval_every == 0 {
                log.push(MetricRow {
                    step,
                    split: "train".into(),
                    metrics: window.metrics(),
                });
                window = RunningMean::new();
                let holdout = evaluate(model, &corpus.holdout, cfg.batch_size)?;
                log.push(MetricRow { step, split: "holdout".into(), metrics: holdout });
                let improved = match &best {
                    None => true,
                    Some((_, _, acc, cls)) => {
                        holdout.accuracy > *acc
                            || (holdout.accuracy == *acc && holdout.loss_cls < *cls)
                    }
                };
                if improved {
                    best = Some((model.snapshot(), step, holdout.accuracy, holdout.loss_cls));
                    bad_evals = 0;
                } else {
                    bad_evals += 1;
                    if bad_evals >= cfg.patience {
                        stopped_early = true;
                        break 'outer;
                    }
                }
            }
            if step >= cfg.max_steps {
                break 'outer;
            }
        }
    }

    // runs shorter than one eval interval still need a best checkpoint
    if best.is_none() {
        let holdout = evaluate(model, &corpus.holdout, cfg.batch_size)?;
        log.push(MetricRow { step, split: "holdout".into(), metrics: holdout });
        best = Some((model.snapshot(), step, holdout.accuracy, holdout.loss_cls));
    }
    let (snapshot, best_step, best_accuracy, _) = best.expect("best checkpoint exists");
    model.restore(&snapshot);
    Ok(TrainOutcome { log, step_losses, best_step, best_accuracy, steps_run: step, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::kmeans_init;
    use crate::corpus::{prepare, random_embeddings, synth};
    use crate::model::{ClueConfig, ScoreKind};

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let p = Tensor::param(&[1], vec![0.0]).unwrap();
        p.with_grad_mut(|g| g[0] = 1.0);
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = Adam::new(&params);
        adam.step(&params, 1e-3);
        let v = p.to_vec()[0];
        assert!((v + 1e-3).abs() < 1e-8, "first Adam step was {v}");
    }

    #[test]
    fn adam_ignores_zero_gradients() {
        let p = Tensor::param(&[2], vec![0.7, -0.3]).unwrap();
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = Adam::new(&params);
        adam.step(&params, 1e-3);
        assert_eq!(p.to_vec(), vec![0.7, -0.3]);
    }

    #[test]
    fn clipping_scales_to_the_ball() {
        let a = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        let b = Tensor::param(&[1], vec![0.0]).unwrap();
        a.with_grad_mut(|g| {
            g[0] = 6.0;
            g[1] = 8.0;
        });
        b.with_grad_mut(|g| g[0] = 0.0);
        let params = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
        let norm = clip_gradients(&params, 5.0).unwrap();
        assert!((norm - 10.0).abs() < 1e-12);
        let g = a.grad_to_vec().unwrap();
        assert!((g[0] - 3.0).abs() < 1e-12);
        assert!((g[1] - 4.0).abs() < 1e-12);
        // post-clip global norm <= clip + tolerance
        let post = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!(post <= 5.0 + 1e-9);
    }

    #[test]
    fn small_gradients_pass_unclipped() {
        let a = Tensor::param(&[2], vec![0.0, 0.0]).unwrap();
        a.with_grad_mut(|g| {
            g[0] = 3.0;
            g[1] = 0.0;
        });
        let params = vec![("a".to_string(), a.clone())];
        clip_gradients(&params, 5.0).unwrap();
        assert_eq!(a.grad_to_vec().unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let a = Tensor::param(&[1], vec![0.0]).unwrap();
        a.with_grad_mut(|g| g[0] = f64::NAN);
        let params = vec![("lstm_fwd_wx".to_string(), a)];
        let err = clip_gradients(&params, 5.0).unwrap_err();
        assert!(err.to_string().contains("lstm_fwd_wx"));
    }

    pub(crate) fn toy_setup(
        variant: Variant,
        seed: u64,
    ) -> (ClueModel, crate::corpus::PreparedCorpus) {
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

    #[test]
    fn separable_corpus_reaches_perfect_holdout() {
        let (model, corpus) = toy_setup(Variant::Baseline, 42);
        let cfg = TrainConfig {
            batch_size: 16,
            max_steps: 300,
            eval_every: 25,
            patience: 30,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &corpus, &cfg).unwrap();
        assert!(
            outcome.best_accuracy == 1.0,
            "holdout accuracy {} after {} steps",
            outcome.best_accuracy,
            outcome.steps_run
        );
        assert!(outcome.steps_run <= 300);
    }

    #[test]
    fn zero_learning_rate_with_patience_one_stops_after_two_evals() {
        let (model, corpus) = toy_setup(Variant::Baseline, 7);
        let cfg = TrainConfig {
            learning_rate: 1e-30, // effectively frozen
            batch_size: 32,
            max_steps: 10_000,
            eval_every: 2,
            patience: 1,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &corpus, &cfg).unwrap();
        let holdout_rows = outcome.log.iter().filter(|r| r.split == "holdout").count();
        assert_eq!(holdout_rows, 2);
        assert!(outcome.stopped_early);
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let run = || {
            let (model, corpus) = toy_setup(Variant::Cvae, 11);
            let cfg = TrainConfig {
                batch_size: 16,
                max_steps: 30,
                eval_every: 10,
                ..TrainConfig::default()
            };
            let outcome = train(&model, &corpus, &cfg).unwrap();
            let metrics: Vec<(usize, String, f64, f64)> = outcome
                .log
                .iter()
                .map(|r| (r.step, r.split.clone(), r.metrics.accuracy, r.metrics.loss_cls))
                .collect();
            (metrics, model.snapshot())
        };
        let (m1, s1) = run();
        let (m2, s2) = run();
        assert_eq!(m1, m2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn evaluation_does_not_mutate_parameters() {
        let (model, corpus) = toy_setup(Variant::Cvae, 13);
        let before = model.snapshot();
        let m1 = evaluate(&model, &corpus.holdout, 16).unwrap();
        let m2 = evaluate(&model, &corpus.holdout, 16).unwrap();
        assert_eq!(model.snapshot(), before);
        assert_eq!(m1, m2);
    }

    #[test]
    fn empty_split_is_an_error() {
        let (model, _corpus) = toy_setup(Variant::Baseline, 3);
        let empty = Split::default();
        assert!(evaluate(&model, &empty, 8).is_err());
    }
}
