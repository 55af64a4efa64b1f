//! The clustering-enhanced classifier: embedding + bi-LSTM encoding, stacked
//! cluster-token interaction layers, pooling head, latent branch, and the
//! variant-gated joint objective.

mod config;
mod interaction;
mod lstm;

pub use config::{ClueConfig, ScoreKind, Variant};
pub use interaction::{
    align, aggregate_token, interaction_stack, score_pair, InteractionLayer, ScoreParams,
};
pub use lstm::{BiLstm, LstmDirection};

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::clustering::{cluster_kl_loss, soft_assign, target_distribution, Centroids};
use crate::corpus::{Document, EmbeddingTable, Split};
use crate::error::{Error, Result};
use crate::latent::{
    decode, draw_noise, encode_ae, encode_vae, recon_loss, prior_kl, DecoderParams,
    EncoderParams, LatentSample,
};
use crate::nn;

/// Train mode carries the RNG that feeds dropout masks and latent noise;
/// eval mode is deterministic (dropout off, z = mu). `FrozenNoise` runs the
/// train-time loss surface with supplied latent noise and no dropout, for
/// finite-difference checks.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
    FrozenNoise(&'a Tensor),
}

/// A forward batch: encoded documents, optional dense tf-idf features, and
/// one-hot labels.
pub struct Batch {
    pub docs: Vec<Document>,
    pub features: Option<Tensor>,
    pub labels: Tensor,
}

impl Batch {
    pub fn from_split(
        split: &Split,
        idxs: &[usize],
        vocab_size: usize,
        num_classes: usize,
        needs_features: bool,
    ) -> Result<Batch> {
        if idxs.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let docs: Vec<Document> = idxs.iter().map(|&i| split.docs[i].clone()).collect();
        let features = if needs_features {
            let mut dense = Vec::with_capacity(idxs.len() * vocab_size);
            for &i in idxs {
                dense.extend(split.features[i].densify(vocab_size));
            }
            Some(Tensor::new(&[idxs.len(), vocab_size], dense)?)
        } else {
            None
        };
        let mut labels = Vec::with_capacity(idxs.len() * num_classes);
        for d in &docs {
            labels.extend(d.one_hot(num_classes));
        }
        Ok(Batch {
            labels: Tensor::new(&[idxs.len(), num_classes], labels)?,
            docs,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Everything a forward pass produces.
pub struct BatchOutput {
    /// `[N, C]` pre-softmax class scores.
    pub logits: Tensor,
    /// `[N, D']` pooled sentence representations (before head dropout).
    pub pooled: Tensor,
    /// Per document, per layer: `[T, K]` cluster alignments.
    pub alignments: Vec<Vec<Tensor>>,
    /// Latent sample (cvae only).
    pub latent: Option<LatentSample>,
    /// `[N, D]` latent codes feeding the clustering loss.
    pub z: Tensor,
    /// `[N, V]` reconstruction (cae/cvae).
    pub recon: Option<Tensor>,
    /// `[N, K]` soft cluster assignment.
    pub q: Tensor,
}

/// Joint loss with its per-term values (batch means).
pub struct LossBreakdown {
    pub total: Tensor,
    pub cls: f64,
    pub cluster: f64,
    pub recon: f64,
    pub kld: f64,
}

pub struct ClueModel {
    pub config: ClueConfig,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub embedding: Tensor,
    pub lstm: BiLstm,
    pub score: ScoreParams,
    pub layers: Vec<InteractionLayer>,
    pub head_ln_gain: Tensor,
    pub head_ln_bias: Tensor,
    pub w_o: Tensor,
    pub w_p: Tensor,
    /// Shared centroid block: trained by the clustering loss, read by the
    /// alignment layers.
    pub centroids: Tensor,
    pub encoder: Option<EncoderParams>,
    pub decoder: Option<DecoderParams>,
    /// Baseline-only projection of the pooled representation into the
    /// clustering space.
    pub cluster_proj: Option<Tensor>,
}

impl ClueModel {
    pub fn new(
        config: ClueConfig,
        num_classes: usize,
        embedding: &EmbeddingTable,
        centroids: &Centroids,
        seed: u64,
    ) -> Result<ClueModel> {
        config.validate()?;
        if num_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if embedding.dim != config.d {
            return Err(Error::config(format!(
                "embedding dim {} != configured d {}",
                embedding.dim, config.d
            )));
        }
        if centroids.dim != config.d || centroids.k != config.k {
            return Err(Error::config(format!(
                "centroids are {}x{}, config wants {}x{}",
                centroids.k, centroids.dim, config.k, config.d
            )));
        }
        let vocab_size = embedding.rows;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let layers = (0..config.n_layers)
            .map(|_| InteractionLayer::init(config.k, d, &mut rng))
            .collect();
        let (encoder, decoder, cluster_proj) = match config.variant {
            Variant::Baseline => (
                None,
                None,
                Some(nn::xavier(config.d_prime, d, &mut rng)),
            ),
            Variant::Cae => (
                Some(EncoderParams::init(vocab_size, config.d_hidden, d, false, &mut rng)),
                Some(DecoderParams::init(d, config.d_hidden, vocab_size, &mut rng)),
                None,
            ),
            Variant::Cvae => (
                Some(EncoderParams::init(vocab_size, config.d_hidden, d, true, &mut rng)),
                Some(DecoderParams::init(d, config.d_hidden, vocab_size, &mut rng)),
                None,
            ),
        };
        Ok(ClueModel {
            embedding: Tensor::param(&[vocab_size, d], embedding.weights.clone())?,
            lstm: BiLstm::init(d, &mut rng),
            score: ScoreParams::init(config.score_kind, d, &mut rng),
            head_ln_gain: nn::ones(&[d]),
            head_ln_bias: nn::zeros(&[d]),
            w_o: nn::xavier(d, config.d_prime, &mut rng),
            w_p: nn::xavier(config.d_prime, num_classes, &mut rng),
            centroids: Tensor::param(&[config.k, config.d], centroids.weights.clone())?,
            layers,
            encoder,
            decoder,
            cluster_proj,
            config,
            vocab_size,
            num_classes,
        })
    }

    /// Named parameter blocks in a fixed, deterministic order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = vec![
            ("embedding".into(), self.embedding.clone()),
            ("lstm_fwd_wx".into(), self.lstm.fwd.w_x.clone()),
            ("lstm_fwd_wh".into(), self.lstm.fwd.w_h.clone()),
            ("lstm_fwd_b".into(), self.lstm.fwd.b.clone()),
            ("lstm_bwd_wx".into(), self.lstm.bwd.w_x.clone()),
            ("lstm_bwd_wh".into(), self.lstm.bwd.w_h.clone()),
            ("lstm_bwd_b".into(), self.lstm.bwd.b.clone()),
        ];
        match &self.score {
            ScoreParams::Dot => {}
            ScoreParams::General { w_a } => out.push(("score_wa".into(), w_a.clone())),
            ScoreParams::Concat { w_c, v } => {
                out.push(("score_wc".into(), w_c.clone()));
                out.push(("score_v".into(), v.clone()));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}_wd"), layer.w_d.clone()));
            out.push((format!("layer{i}_ln_gain"), layer.ln_gain.clone()));
            out.push((format!("layer{i}_ln_bias"), layer.ln_bias.clone()));
        }
        out.push(("head_ln_gain".into(), self.head_ln_gain.clone()));
        out.push(("head_ln_bias".into(), self.head_ln_bias.clone()));
        out.push(("head_wo".into(), self.w_o.clone()));
        out.push(("head_wp".into(), self.w_p.clone()));
        out.push(("centroids".into(), self.centroids.clone()));
        if let Some(p) = &self.cluster_proj {
            out.push(("cluster_proj".into(), p.clone()));
        }
        if let Some(enc) = &self.encoder {
            out.push(("enc_w1".into(), enc.w1.clone()));
            out.push(("enc_b1".into(), enc.b1.clone()));
            out.push(("enc_wmu".into(), enc.w_mu.clone()));
            out.push(("enc_bmu".into(), enc.b_mu.clone()));
            if let (Some(w), Some(b)) = (&enc.w_logvar, &enc.b_logvar) {
                out.push(("enc_wlogvar".into(), w.clone()));
                out.push(("enc_blogvar".into(), b.clone()));
            }
        }
        if let Some(dec) = &self.decoder {
            out.push(("dec_w1".into(), dec.w1.clone()));
            out.push(("dec_b1".into(), dec.b1.clone()));
            out.push(("dec_w2".into(), dec.w2.clone()));
            out.push(("dec_b2".into(), dec.b2.clone()));
        }
        out
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.params() {
            t.zero_grad();
        }
    }

    /// Copy of all parameter values, in `params()` order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|(_, t)| t.to_vec()).collect()
    }

    pub fn restore(&self, snapshot: &[Vec<f64>]) {
        let params = self.params();
        assert_eq!(params.len(), snapshot.len(), "snapshot/param count mismatch");
        for ((_, t), values) in params.iter().zip(snapshot) {
            t.with_values_mut(|v| v.copy_from_slice(values));
        }
    }

    /// Full forward pass over a batch.
    pub fn forward(&self, tape: &Tape, batch: &Batch, mode: Mode<'_>) -> Result<BatchOutput> {
        if batch.is_empty() {
            return Err(Error::data("forward on an empty batch"));
        }
        let (mut rng, frozen_eps) = match mode {
            Mode::Train(r) => (Some(r), None),
            Mode::Eval => (None, None),
            Mode::FrozenNoise(eps) => (None, Some(eps)),
        };
        let rate = self.config.dropout_rate;

        let mut pooled_rows = Vec::with_capacity(batch.len());
        let mut alignments = Vec::with_capacity(batch.len());
        for doc in &batch.docs {
            if doc.true_len == 0 {
                return Err(Error::data("document with true_len 0"));
            }
            let ids: Vec<usize> = doc.ids[..doc.true_len].iter().map(|&i| i as usize).collect();
            let h_e = tape.embedding_gather(&self.embedding, &ids)?;
            let h_e = tape.dropout(&h_e, rate, rng.as_deref_mut())?;
            let h = self.lstm.run(tape, &h_e)?;
            let (s, aligns) =
                interaction_stack(tape, &self.centroids, &h, &self.layers, &self.score)?;
            // stack-level residual from the bi-LSTM output
            let ln = tape.layer_norm(
                &tape.add(&s, &h)?,
                &self.head_ln_gain,
                &self.head_ln_bias,
            )?;
            let pre_pool = tape.relu(&tape.matmul(&ln, &self.w_o)?)?;
            pooled_rows.push(tape.max_over_axis(&pre_pool, 0, None)?);
            alignments.push(aligns);
        }
        let refs: Vec<&Tensor> = pooled_rows.iter().collect();
        let pooled = tape.stack_rows(&refs)?;
        let pooled_dropped = tape.dropout(&pooled, rate, rng.as_deref_mut())?;
        let logits = tape.matmul(&pooled_dropped, &self.w_p)?;

        let (z, latent, recon) = match self.config.variant {
            Variant::Baseline => {
                let proj = self.cluster_proj.as_ref().expect("baseline has cluster_proj");
                (tape.matmul(&pooled, proj)?, None, None)
            }
            Variant::Cae => {
                let x = batch
                    .features
                    .as_ref()
                    .ok_or_else(|| Error::config("cae forward needs tf-idf features"))?;
                let enc = self.encoder.as_ref().expect("cae has encoder");
                let dec = self.decoder.as_ref().expect("cae has decoder");
                let z = encode_ae(tape, x, enc)?;
                let recon = decode(tape, &z, dec)?;
                (z, None, Some(recon))
            }
            Variant::Cvae => {
                let x = batch
                    .features
                    .as_ref()
                    .ok_or_else(|| Error::config("cvae forward needs tf-idf features"))?;
                let enc = self.encoder.as_ref().expect("cvae has encoder");
                let dec = self.decoder.as_ref().expect("cvae has decoder");
                let drawn = rng
                    .as_deref_mut()
                    .map(|r| draw_noise(&[batch.len(), self.config.d], r));
                let eps = drawn.as_ref().or(frozen_eps);
                let sample = encode_vae(tape, x, enc, eps)?;
                let recon = decode(tape, &sample.z, dec)?;
                (sample.z.clone(), Some(sample), Some(recon))
            }
        };
        let q = soft_assign(tape, &z, &self.centroids, self.config.alpha)?;

        Ok(BatchOutput { logits, pooled, alignments, latent, z, recon, q })
    }

    /// Assemble the variant-gated joint objective. Every term is a batch
    /// mean; terms with zero weight are skipped so the total stays exactly
    /// the weighted sum of active terms.
    pub fn joint_loss(&self, tape: &Tape, out: &BatchOutput, batch: &Batch) -> Result<LossBreakdown> {
        let n = batch.len() as f64;
        let cls = tape.cross_entropy_with_softmax(&out.logits, &batch.labels)?;

        let p = target_distribution(&out.q)?;
        let cluster = tape.scale(&cluster_kl_loss(tape, &p, &out.q)?, 1.0 / n)?;

        let recon = match (&out.recon, &batch.features) {
            (Some(r), Some(x)) => Some(recon_loss(tape, x, r)?),
            _ => None,
        };
        let kld = match &out.latent {
            Some(sample) => Some(prior_kl(tape, &sample.mu, &sample.logvar)?),
            None => None,
        };

        let mut total = cls.clone();
        if self.config.lambda1 != 0.0 {
            total = tape.add(&total, &tape.scale(&cluster, self.config.lambda1)?)?;
        }
        if self.config.lambda2 != 0.0 {
            let r = recon
                .as_ref()
                .ok_or_else(|| Error::config("lambda2 set but no reconstruction term"))?;
            total = tape.add(&total, &tape.scale(r, self.config.lambda2)?)?;
        }
        if self.config.lambda3 != 0.0 {
            let k = kld
                .as_ref()
                .ok_or_else(|| Error::config("lambda3 set but no prior-KL term"))?;
            total = tape.add(&total, &tape.scale(k, self.config.lambda3)?)?;
        }
        Ok(LossBreakdown {
            total,
            cls: cls.item(),
            cluster: cluster.item(),
            recon: recon.map_or(0.0, |t| t.item()),
            kld: kld.map_or(0.0, |t| t.item()),
        })
    }

    /// Write every parameter block plus a manifest carrying block shapes and
    /// the model configuration.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = BufWriter::new(File::create(dir.join("manifest.tsv"))?);
        for (key, value) in self.config_entries() {
            writeln!(manifest, "config\t{key}\t{value}")?;
        }
        for (name, tensor) in self.params() {
            let dims: Vec<String> = tensor.shape().iter().map(|e| e.to_string()).collect();
            writeln!(manifest, "param\t{name}\t{}", dims.join(" "))?;
            tensor.save_tsv(&dir.join(format!("{name}.tsv")))?;
        }
        manifest.flush()?;
        Ok(())
    }

    fn config_entries(&self) -> Vec<(String, String)> {
        let c = &self.config;
        vec![
            ("variant".into(), c.variant.as_str().into()),
            ("k".into(), c.k.to_string()),
            ("n_layers".into(), c.n_layers.to_string()),
            ("d".into(), c.d.to_string()),
            ("d_prime".into(), c.d_prime.to_string()),
            ("d_hidden".into(), c.d_hidden.to_string()),
            ("score_kind".into(), c.score_kind.as_str().into()),
            ("lambda1".into(), c.lambda1.to_string()),
            ("lambda2".into(), c.lambda2.to_string()),
            ("lambda3".into(), c.lambda3.to_string()),
            ("alpha".into(), c.alpha.to_string()),
            ("dropout".into(), c.dropout_rate.to_string()),
            ("max_len".into(), c.max_len.to_string()),
            ("vocab_size".into(), self.vocab_size.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
        ]
    }

    pub fn load_checkpoint(dir: &Path) -> Result<ClueModel> {
        let manifest_path = dir.join("manifest.tsv");
        let f = File::open(&manifest_path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", manifest_path.display()),
            ))
        })?;
        let mut cfg: HashMap<String, String> = HashMap::new();
        let mut param_names = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line?;
            let mut parts = line.splitn(3, '\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some("config"), Some(k), Some(v)) => {
                    cfg.insert(k.to_string(), v.to_string());
                }
                (Some("param"), Some(name), Some(_dims)) => param_names.push(name.to_string()),
                _ => return Err(Error::data("malformed checkpoint manifest line")),
            }
        }
        let get = |k: &str| -> Result<&str> {
            cfg.get(k)
                .map(|s| s.as_str())
                .ok_or_else(|| Error::data(format!("checkpoint manifest missing {k}")))
        };
        let parse_num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::data(format!("bad checkpoint value for {k}")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::data(format!("bad checkpoint value for {k}")))
        };
        let config = ClueConfig {
            variant: get("variant")?.parse()?,
            k: parse_num("k")?,
            n_layers: parse_num("n_layers")?,
            d: parse_num("d")?,
            d_prime: parse_num("d_prime")?,
            d_hidden: parse_num("d_hidden")?,
            score_kind: get("score_kind")?.parse()?,
            lambda1: parse_f("lambda1")?,
            lambda2: parse_f("lambda2")?,
            lambda3: parse_f("lambda3")?,
            alpha: parse_f("alpha")?,
            dropout_rate: parse_f("dropout")?,
            max_len: parse_num("max_len")?,
        };
        let vocab_size = parse_num("vocab_size")?;
        let num_classes = parse_num("num_classes")?;

        let blank_embedding = EmbeddingTable {
            rows: vocab_size,
            dim: config.d,
            weights: vec![0.0; vocab_size * config.d],
        };
        let blank_centroids = Centroids {
            k: config.k,
            dim: config.d,
            weights: vec![0.0; config.k * config.d],
            init_method: crate::clustering::InitMethod::KMeans,
        };
        let model = ClueModel::new(config, num_classes, &blank_embedding, &blank_centroids, 0)?;

        let params = model.params();
        let expected: Vec<&String> = params.iter().map(|(n, _)| n).collect();
        if expected.len() != param_names.len()
            || expected.iter().zip(&param_names).any(|(a, b)| *a != b)
        {
            return Err(Error::data(format!(
                "checkpoint parameter blocks {param_names:?} do not match the configuration"
            )));
        }
        for (name, tensor) in &params {
            let loaded = Tensor::load_tsv(&dir.join(format!("{name}.tsv")))?;
            if loaded.shape() != tensor.shape() {
                return Err(Error::data(format!(
                    "checkpoint block {name} has shape {:?}, expected {:?}",
                    loaded.shape(),
                    tensor.shape()
                )));
            }
            tensor.with_values_mut(|v| v.copy_from_slice(&loaded.values()));
        }
        Ok(model)
    }

    /// Predicted class per document from a logits matrix.
    pub fn predictions(logits: &Tensor) -> Vec<usize> {
        let shape = logits.shape();
        let (n, c) = (shape[0], shape[1]);
        let v = logits.values();
        (0..n)
            .map(|i| {
                let row = &v[i * c..(i + 1) * c];
                (0..c).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
            })
            .collect()
    }
}
