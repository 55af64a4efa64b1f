//! Parameter-initialization helpers shared by the latent branch and the
//! classifier.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

/// Glorot/Xavier uniform init for a `[rows, cols]` weight matrix.
pub(crate) fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
        .collect();
    Tensor::param(&[rows, cols], values).expect("positive extents")
}

/// Uniform init in [-limit, limit].
pub(crate) fn uniform(shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
        .collect();
    Tensor::param(shape, values).expect("positive extents")
}

pub(crate) fn zeros(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::param(shape, vec![0.0; n]).expect("positive extents")
}

pub(crate) fn ones(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::param(shape, vec![1.0; n]).expect("positive extents")
}
