//! Latent branch over tf-idf features: a two-layer encoder to `z` (with
//! mean/log-variance heads in the variational case), a two-layer decoder
//! back to vocabulary space, and the reconstruction / prior-KL objectives.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn;

/// Two dense layers `V -> D_h -> D` with a relu between them. The
/// variational form adds a second head for the log-variance.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w_mu: Tensor,
    pub b_mu: Tensor,
    /// Present only for the variational encoder.
    pub w_logvar: Option<Tensor>,
    pub b_logvar: Option<Tensor>,
}

impl EncoderParams {
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        variational: bool,
        rng: &mut ChaCha8Rng,
    ) -> EncoderParams {
        EncoderParams {
            w1: nn::xavier(input_dim, hidden_dim, rng),
            b1: nn::zeros(&[hidden_dim]),
            w_mu: nn::xavier(hidden_dim, latent_dim, rng),
            b_mu: nn::zeros(&[latent_dim]),
            w_logvar: variational.then(|| nn::xavier(hidden_dim, latent_dim, rng)),
            b_logvar: variational.then(|| nn::zeros(&[latent_dim])),
        }
    }
}

/// Two dense layers `D -> D_h -> V`, relu between, linear output.
#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl DecoderParams {
    pub fn init(
        latent_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> DecoderParams {
        DecoderParams {
            w1: nn::xavier(latent_dim, hidden_dim, rng),
            b1: nn::zeros(&[hidden_dim]),
            w2: nn::xavier(hidden_dim, output_dim, rng),
            b2: nn::zeros(&[output_dim]),
        }
    }
}

/// Per-batch latent state. At train time `z = mu + exp(logvar/2) * eps`;
/// at eval time `z = mu`.
#[derive(Debug, Clone)]
pub struct LatentSample {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub z: Tensor,
}

fn dense(tape: &Tape, x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    tape.add(&tape.matmul(x, w)?, b)
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite activations in {what}")));
    }
    Ok(())
}

/// Standard-normal noise of the given shape, drawn from the run RNG.
pub fn draw_noise(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Tensor::new(shape, values).expect("positive extents")
}

/// Variational encoding with the reparameterization trick. Gradients flow
/// through the mean and log-variance, never through the noise. Passing
/// `None` for `eps` selects the deterministic eval convention `z = mu`.
pub fn encode_vae(
    tape: &Tape,
    x: &Tensor,
    params: &EncoderParams,
    eps: Option<&Tensor>,
) -> Result<LatentSample> {
    let (w_lv, b_lv) = match (&params.w_logvar, &params.b_logvar) {
        (Some(w), Some(b)) => (w, b),
        _ => return Err(Error::config("encode_vae on a non-variational encoder")),
    };
    let hidden = tape.relu(&dense(tape, x, &params.w1, &params.b1)?)?;
    let mu = dense(tape, &hidden, &params.w_mu, &params.b_mu)?;
    let logvar = dense(tape, &hidden, w_lv, b_lv)?;
    check_finite(&mu, "encoder mean")?;
    check_finite(&logvar, "encoder log-variance")?;
    let z = match eps {
        Some(eps) => {
            if eps.shape() != mu.shape() {
                return Err(Error::shape(format!(
                    "noise shape {:?} does not match latent shape {:?}",
                    eps.shape(),
                    mu.shape()
                )));
            }
            let sigma = tape.exp(&tape.scale(&logvar, 0.5)?)?;
            tape.add(&mu, &tape.mul(&sigma, eps)?)?
        }
        None => mu.clone(),
    };
    Ok(LatentSample { mu, logvar, z })
}

/// Deterministic two-layer encoding; no noise, no prior term.
pub fn encode_ae(tape: &Tape, x: &Tensor, params: &EncoderParams) -> Result<Tensor> {
    let hidden = tape.relu(&dense(tape, x, &params.w1, &params.b1)?)?;
    let z = dense(tape, &hidden, &params.w_mu, &params.b_mu)?;
    check_finite(&z, "encoder output")?;
    Ok(z)
}

/// Two-layer reconstruction back to vocabulary space (linear output).
pub fn decode(tape: &Tape, z: &Tensor, params: &DecoderParams) -> Result<Tensor> {
    let hidden = tape.relu(&dense(tape, z, &params.w1, &params.b1)?)?;
    dense(tape, &hidden, &params.w2, &params.b2)
}

/// Mean over the batch of per-sample squared reconstruction error.
pub fn recon_loss(tape: &Tape, x: &Tensor, x_recon: &Tensor) -> Result<Tensor> {
    if x.numel() == 0 {
        return Err(Error::shape("recon_loss on empty batch"));
    }
    tape.mse(x_recon, x)
}

/// KL of the diagonal-Gaussian posterior against the standard normal prior,
/// averaged over the batch: `-1/2 sum_j (1 + logvar - mu^2 - exp(logvar))`.
/// Always nonnegative.
pub fn prior_kl(tape: &Tape, mu: &Tensor, logvar: &Tensor) -> Result<Tensor> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape(format!(
            "prior_kl shapes differ: {:?} vs {:?}",
            mu.shape(),
            logvar.shape()
        )));
    }
    let n_batch = if mu.rank() >= 2 { mu.shape()[0] } else { 1 } as f64;
    let term = tape.sub(
        &tape.sub(&tape.add_scalar(logvar, 1.0)?, &tape.mul(mu, mu)?)?,
        &tape.exp(logvar)?,
    )?;
    tape.scale(&tape.sum(&term)?, -0.5 / n_batch)
}
