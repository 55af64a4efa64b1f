//! Model configuration: variant gating, dimensions, score kind, loss weights.

use crate::error::{Error, Result};

/// Which latent branch the model runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// No latent branch; the clustering loss sees a projection of the pooled
    /// text representation.
    Baseline,
    /// Deterministic autoencoder branch (adds the reconstruction loss).
    Cae,
    /// Variational branch (adds reconstruction and prior-KL losses).
    Cvae,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Cae => "cae",
            Variant::Cvae => "cvae",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "cae" => Ok(Variant::Cae),
            "cvae" => Ok(Variant::Cvae),
            other => Err(Error::config(format!(
                "unknown variant {other:?} (expected baseline, cae, or cvae)"
            ))),
        }
    }
}

/// Alignment score function between a centroid and a token representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Dot,
    General,
    Concat,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::Dot => "dot",
            ScoreKind::General => "general",
            ScoreKind::Concat => "concat",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScoreKind> {
        match s {
            "dot" => Ok(ScoreKind::Dot),
            "general" => Ok(ScoreKind::General),
            "concat" => Ok(ScoreKind::Concat),
            other => Err(Error::config(format!(
                "unknown score kind {other:?} (expected dot, general, or concat)"
            ))),
        }
    }
}

/// Full model configuration.
#[derive(Debug, Clone)]
pub struct ClueConfig {
    pub variant: Variant,
    /// Number of cluster centroids.
    pub k: usize,
    /// Cluster-token interaction layers.
    pub n_layers: usize,
    /// Embedding / token-representation width (even: the bi-LSTM halves it).
    pub d: usize,
    /// Head width after the pooling projection.
    pub d_prime: usize,
    /// Hidden width of the latent encoder/decoder.
    pub d_hidden: usize,
    pub score_kind: ScoreKind,
    /// Clustering, reconstruction, and prior-KL loss weights.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Student's-t degrees of freedom for the soft assignment.
    pub alpha: f64,
    pub dropout_rate: f64,
    pub max_len: usize,
}

impl Default for ClueConfig {
    fn default() -> Self {
        ClueConfig {
            variant: Variant::Cvae,
            k: 4,
            n_layers: 3,
            d: 300,
            d_prime: 300,
            d_hidden: 500,
            score_kind: ScoreKind::Dot,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            alpha: 1.0,
            dropout_rate: 0.2,
            max_len: 20,
        }
    }
}

impl ClueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::config(format!(
                "d = {} must be even (bi-LSTM halves split)",
                self.d
            )));
        }
        if self.k < 1 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.n_layers < 1 {
            return Err(Error::config("n_layers must be at least 1"));
        }
        if self.d_prime == 0 || self.d_hidden == 0 || self.max_len == 0 {
            return Err(Error::config("d_prime, d_hidden, and max_len must be positive"));
        }
        for (name, l) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if l < 0.0 || !l.is_finite() {
                return Err(Error::config(format!("{name} = {l} must be >= 0")));
            }
        }
        if self.alpha <= 0.0 {
            return Err(Error::config("alpha must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout rate must be in [0, 1)"));
        }
        // a positive weight on a loss term the variant cannot produce is a
        // configuration error, never a silent drop
        match self.variant {
            Variant::Baseline => {
                if self.lambda2 != 0.0 || self.lambda3 != 0.0 {
                    return Err(Error::config(
                        "baseline variant has no reconstruction/KL terms; set lambda2 = lambda3 = 0",
                    ));
                }
            }
            Variant::Cae => {
                if self.lambda3 != 0.0 {
                    return Err(Error::config(
                        "cae variant has no prior-KL term; set lambda3 = 0",
                    ));
                }
            }
            Variant::Cvae => {}
        }
        Ok(())
    }
}
