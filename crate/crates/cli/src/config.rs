//! Run configuration: `key = value` file plus `--key value` command-line
//! overrides. Unknown keys are rejected; every run writes its fully
//! resolved configuration next to its outputs.

use std::collections::HashSet;
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clue_core::error::{Error, Result};
use clue_core::model::ClueConfig;
use clue_core::training::TrainConfig;

#[derive(Debug, Clone)]
pub struct RunConfig {
    // corpus
    pub train_path: String,
    pub test_path: String,
    pub delimiter: String,
    pub num_classes: usize,
    pub max_len: usize,
    pub min_count: u64,
    pub holdout_fraction: f64,
    pub prepared_dir: String,
    // model
    pub variant: String,
    pub k: usize,
    pub n_layers: usize,
    pub d: usize,
    /// 0 means "match d".
    pub d_prime: usize,
    pub d_hidden: usize,
    pub score_kind: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha: f64,
    pub dropout: f64,
    // training
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub eval_every: usize,
    pub seed: u64,
    // centroids
    pub init_method: String,
    /// Empty means `<prepared_dir>/centroids.tsv`.
    pub centroids_path: String,
    /// Empty means random-initialized embeddings.
    pub embeddings_path: String,
    // outputs and per-command knobs
    pub out_dir: String,
    /// Empty means `<out_dir>/checkpoint`.
    pub checkpoint_dir: String,
    pub eval_split: String,
    pub export_what: String,
    pub export_doc: usize,
    pub export_split: String,
    pub sweep_axis: String,
    pub sweep_values: String,

    explicit: HashSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_path: String::new(),
            test_path: String::new(),
            delimiter: ",".into(),
            num_classes: 0,
            max_len: 20,
            min_count: 3,
            holdout_fraction: 0.10,
            prepared_dir: "prepared".into(),
            variant: "cvae".into(),
            k: 4,
            n_layers: 3,
            d: 300,
            d_prime: 0,
            d_hidden: 500,
            score_kind: "dot".into(),
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            alpha: 1.0,
            dropout: 0.2,
            learning_rate: 1e-3,
            batch_size: 64,
            max_steps: 10_000,
            patience: 30,
            clip_norm: 5.0,
            eval_every: 50,
            seed: 0,
            init_method: "kmeans".into(),
            centroids_path: String::new(),
            embeddings_path: String::new(),
            out_dir: "run".into(),
            checkpoint_dir: String::new(),
            eval_split: "test".into(),
            export_what: "embeddings".into(),
            export_doc: 0,
            export_split: "test".into(),
            sweep_axis: "clusters".into(),
            sweep_values: String::new(),
            explicit: HashSet::new(),
        }
    }
}

macro_rules! parse_into {
    ($self:ident, $field:ident, $value:expr, $key:expr) => {
        $self.$field = $value
            .parse()
            .map_err(|_| Error::config(format!("bad value {:?} for key {}", $value, $key)))?
    };
}

impl RunConfig {
    /// Merge a config file (if given) and command-line overrides over the
    /// defaults.
    pub fn load(config_path: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_path {
            let text = fs::read_to_string(path).map_err(|e| {
                Error::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::config(format!(
                        "{}:{}: expected key = value",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                cfg.set(key.trim(), value.trim())?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.apply_variant_defaults();
        Ok(cfg)
    }

    /// Terms a variant cannot produce default their weight to zero unless
    /// the user set it explicitly (an explicit nonzero weight stays and is
    /// rejected later by model validation).
    fn apply_variant_defaults(&mut self) {
        if self.variant == "baseline" {
            if !self.explicit.contains("lambda2") {
                self.lambda2 = 0.0;
            }
            if !self.explicit.contains("lambda3") {
                self.lambda3 = 0.0;
            }
        }
        if self.variant == "cae" && !self.explicit.contains("lambda3") {
            self.lambda3 = 0.0;
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train_path" => self.train_path = value.into(),
            "test_path" => self.test_path = value.into(),
            "delimiter" => self.delimiter = value.into(),
            "num_classes" => parse_into!(self, num_classes, value, key),
            "max_len" => parse_into!(self, max_len, value, key),
            "min_count" => parse_into!(self, min_count, value, key),
            "holdout_fraction" => parse_into!(self, holdout_fraction, value, key),
            "prepared_dir" => self.prepared_dir = value.into(),
            "variant" => self.variant = value.into(),
            "k" => parse_into!(self, k, value, key),
            "n_layers" => parse_into!(self, n_layers, value, key),
            "d" => parse_into!(self, d, value, key),
            "d_prime" => parse_into!(self, d_prime, value, key),
            "d_hidden" => parse_into!(self, d_hidden, value, key),
            "score_kind" => self.score_kind = value.into(),
            "lambda1" => parse_into!(self, lambda1, value, key),
            "lambda2" => parse_into!(self, lambda2, value, key),
            "lambda3" => parse_into!(self, lambda3, value, key),
            "alpha" => parse_into!(self, alpha, value, key),
            "dropout" => parse_into!(self, dropout, value, key),
            "learning_rate" => parse_into!(self, learning_rate, value, key),
            "batch_size" => parse_into!(self, batch_size, value, key),
            "max_steps" => parse_into!(self, max_steps, value, key),
            "patience" => parse_into!(self, patience, value, key),
            "clip_norm" => parse_into!(self, clip_norm, value, key),
            "eval_every" => parse_into!(self, eval_every, value, key),
            "seed" => parse_into!(self, seed, value, key),
            "init_method" => self.init_method = value.into(),
            "centroids_path" => self.centroids_path = value.into(),
            "embeddings_path" => self.embeddings_path = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "checkpoint_dir" => self.checkpoint_dir = value.into(),
            "eval_split" => self.eval_split = value.into(),
            "export_what" => self.export_what = value.into(),
            "export_doc" => parse_into!(self, export_doc, value, key),
            "export_split" => self.export_split = value.into(),
            "sweep_axis" => self.sweep_axis = value.into(),
            "sweep_values" => self.sweep_values = value.into(),
            other => {
                return Err(Error::config(format!("unknown config key {other:?}")));
            }
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn effective_d_prime(&self) -> usize {
        if self.d_prime == 0 {
            self.d
        } else {
            self.d_prime
        }
    }

    pub fn effective_centroids_path(&self) -> PathBuf {
        if self.centroids_path.is_empty() {
            Path::new(&self.prepared_dir).join("centroids.tsv")
        } else {
            PathBuf::from(&self.centroids_path)
        }
    }

    pub fn effective_checkpoint_dir(&self) -> PathBuf {
        if self.checkpoint_dir.is_empty() {
            Path::new(&self.out_dir).join("checkpoint")
        } else {
            PathBuf::from(&self.checkpoint_dir)
        }
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_str() {
            "tab" | "\\t" => Ok(b'\t'),
            s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
            other => Err(Error::config(format!(
                "delimiter {other:?} must be a single ASCII character, \"tab\", or \"\\t\""
            ))),
        }
    }

    pub fn model_config(&self, max_len: usize) -> Result<ClueConfig> {
        let cfg = ClueConfig {
            variant: self.variant.parse()?,
            k: self.k,
            n_layers: self.n_layers,
            d: self.d,
            d_prime: self.effective_d_prime(),
            d_hidden: self.d_hidden,
            score_kind: self.score_kind.parse()?,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            alpha: self.alpha,
            dropout_rate: self.dropout,
            max_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_steps: self.max_steps,
            patience: self.patience,
            clip_norm: self.clip_norm,
            eval_every: self.eval_every,
            seed: self.seed,
        }
    }

    /// All keys in declaration order with their effective values.
    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("train_path", self.train_path.clone()),
            ("test_path", self.test_path.clone()),
            ("delimiter", self.delimiter.clone()),
            ("num_classes", self.num_classes.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_count", self.min_count.to_string()),
            ("holdout_fraction", self.holdout_fraction.to_string()),
            ("prepared_dir", self.prepared_dir.clone()),
            ("variant", self.variant.clone()),
            ("k", self.k.to_string()),
            ("n_layers", self.n_layers.to_string()),
            ("d", self.d.to_string()),
            ("d_prime", self.effective_d_prime().to_string()),
            ("d_hidden", self.d_hidden.to_string()),
            ("score_kind", self.score_kind.clone()),
            ("lambda1", self.lambda1.to_string()),
            ("lambda2", self.lambda2.to_string()),
            ("lambda3", self.lambda3.to_string()),
            ("alpha", self.alpha.to_string()),
            ("dropout", self.dropout.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("patience", self.patience.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("seed", self.seed.to_string()),
            ("init_method", self.init_method.clone()),
            ("centroids_path", self.effective_centroids_path().display().to_string()),
            ("embeddings_path", self.embeddings_path.clone()),
            ("out_dir", self.out_dir.clone()),
            ("checkpoint_dir", self.effective_checkpoint_dir().display().to_string()),
            ("eval_split", self.eval_split.clone()),
            ("export_what", self.export_what.clone()),
            ("export_doc", self.export_doc.to_string()),
            ("export_split", self.export_split.clone()),
            ("sweep_axis", self.sweep_axis.clone()),
            ("sweep_values", self.sweep_values.clone()),
        ]
    }

    /// Write the fully resolved configuration snapshot.
    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(path)?);
        for (key, value) in self.entries() {
            writeln!(w, "{key} = {value}")?;
        }
        w.flush()?;
        Ok(())
    }
}
