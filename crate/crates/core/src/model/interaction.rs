//! Cluster-token interaction: alignment scores, softmax over clusters, and
//! Kronecker feature aggregation with residual + layer norm.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::ScoreKind;
use crate::nn;

/// Score-function parameters, shared across the layer stack.
#[derive(Debug, Clone)]
pub enum ScoreParams {
    Dot,
    /// Bilinear form `c W_a h^T` with `W_a [D, D]`.
    General { w_a: Tensor },
    /// Additive form `v . tanh(W_c [c; h])` with `W_c [2D, D]`, `v [D]`.
    Concat { w_c: Tensor, v: Tensor },
}

impl ScoreParams {
    pub fn init(kind: ScoreKind, d: usize, rng: &mut ChaCha8Rng) -> ScoreParams {
        match kind {
            ScoreKind::Dot => ScoreParams::Dot,
            ScoreKind::General => ScoreParams::General { w_a: nn::xavier(d, d, rng) },
            ScoreKind::Concat => ScoreParams::Concat {
                w_c: nn::xavier(2 * d, d, rng),
                v: nn::uniform(&[d], (1.0 / d as f64).sqrt(), rng),
            },
        }
    }

    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreParams::Dot => ScoreKind::Dot,
            ScoreParams::General { .. } => ScoreKind::General,
            ScoreParams::Concat { .. } => ScoreKind::Concat,
        }
    }
}

/// One interaction layer: its own reduction matrix `W_d [K*D, D]` and layer
/// norm parameters; centroids and score weights are shared across layers.
#[derive(Debug, Clone)]
pub struct InteractionLayer {
    pub w_d: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
}

impl InteractionLayer {
    pub fn init(k: usize, d: usize, rng: &mut ChaCha8Rng) -> InteractionLayer {
        InteractionLayer {
            w_d: nn::xavier(k * d, d, rng),
            ln_gain: nn::ones(&[d]),
            ln_bias: nn::zeros(&[d]),
        }
    }
}

/// Raw relevance scores between every token row of `h` (`[T, D]`) and every
/// centroid (`[K, D]`): output `[T, K]`.
fn scores(tape: &Tape, centroids: &Tensor, h: &Tensor, score: &ScoreParams) -> Result<Tensor> {
    match score {
        ScoreParams::Dot => tape.matmul(h, &tape.transpose(centroids)?),
        ScoreParams::General { w_a } => {
            let projected = tape.matmul(centroids, w_a)?;
            tape.matmul(h, &tape.transpose(&projected)?)
        }
        ScoreParams::Concat { w_c, v } => {
            let d = h.shape()[1];
            let w_top = tape.slice(w_c, 0, 0, d)?;
            let w_bot = tape.slice(w_c, 0, d, d)?;
            let pc = tape.matmul(centroids, &w_top)?; // [K, D]
            let ph = tape.matmul(h, &w_bot)?; // [T, D]
            let k = centroids.shape()[0];
            let mut cols = Vec::with_capacity(k);
            for c in 0..k {
                let mixed = tape.tanh(&tape.add(&ph, &tape.row(&pc, c)?)?)?;
                cols.push(tape.matmul(&mixed, v)?); // [T]
            }
            let refs: Vec<&Tensor> = cols.iter().collect();
            tape.transpose(&tape.stack_rows(&refs)?) // [K,T] -> [T,K]
        }
    }
}

/// Scalar relevance between one centroid and one token representation.
pub fn score_pair(tape: &Tape, c: &Tensor, h: &Tensor, score: &ScoreParams) -> Result<Tensor> {
    if c.rank() != 1 || h.rank() != 1 || c.numel() != h.numel() {
        return Err(Error::shape("score_pair expects two vectors of equal width"));
    }
    let d = c.numel();
    let c_mat = tape.reshape(c, &[1, d])?;
    let h_mat = tape.reshape(h, &[1, d])?;
    tape.reshape(&scores(tape, &c_mat, &h_mat, score)?, &[1])
}

/// Alignment distribution over clusters for each token: softmax of the
/// scores along the cluster axis. Rows of the `[T, K]` result sum to 1.
pub fn align(tape: &Tape, centroids: &Tensor, h: &Tensor, score: &ScoreParams) -> Result<Tensor> {
    if centroids.rank() != 2 || h.rank() != 2 || centroids.shape()[1] != h.shape()[1] {
        return Err(Error::shape(format!(
            "align expects [K,D] centroids and [T,D] tokens, got {:?} and {:?}",
            centroids.shape(),
            h.shape()
        )));
    }
    let s = scores(tape, centroids, h, score)?;
    tape.softmax(&s, 1)
}

/// Kronecker aggregation of one token: `u = (a (x) h) W_d`, then
/// `layer_norm(u + h)`.
pub fn aggregate_token(
    tape: &Tape,
    layer: &InteractionLayer,
    a: &Tensor,
    h: &Tensor,
) -> Result<Tensor> {
    let u = tape.matmul(&tape.kron_vec(a, h)?, &layer.w_d)?;
    tape.layer_norm(&tape.add(&u, h)?, &layer.ln_gain, &layer.ln_bias)
}

/// Whole-sequence aggregation: row-wise Kronecker products, dimension
/// reduction, residual, layer norm.
fn aggregate(tape: &Tape, layer: &InteractionLayer, a: &Tensor, h: &Tensor) -> Result<Tensor> {
    let u = tape.matmul(&tape.kron_rows(a, h)?, &layer.w_d)?;
    tape.layer_norm(&tape.add(&u, h)?, &layer.ln_gain, &layer.ln_bias)
}

/// Run the N-layer stack. Layer n aligns its own input against the shared
/// centroids, aggregates, and feeds layer n+1. Returns the final `[T, D]`
/// representation and each layer's `[T, K]` alignment (for export).
pub fn interaction_stack(
    tape: &Tape,
    centroids: &Tensor,
    h: &Tensor,
    layers: &[InteractionLayer],
    score: &ScoreParams,
) -> Result<(Tensor, Vec<Tensor>)> {
    let mut current = h.clone();
    let mut alignments = Vec::with_capacity(layers.len());
    for layer in layers {
        let a = align(tape, centroids, &current, score)?;
        current = aggregate(tape, layer, &a, &current)?;
        alignments.push(a);
    }
    Ok((current, alignments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check_many, DEFAULT_EPS};
    use rand::Rng;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dot_score_examples() {
        let tape = Tape::inactive();
        let e1 = Tensor::new(&[3], vec![1.0, 0.0, 0.0]).unwrap();
        let e2 = Tensor::new(&[3], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(score_pair(&tape, &e1, &e1, &ScoreParams::Dot).unwrap().item(), 1.0);
        assert_eq!(score_pair(&tape, &e1, &e2, &ScoreParams::Dot).unwrap().item(), 0.0);
    }

    #[test]
    fn general_with_identity_equals_dot() {
        let tape = Tape::inactive();
        let d = 3;
        let eye = Tensor::new(&[d, d], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let general = ScoreParams::General { w_a: eye };
        let c = Tensor::new(&[d], vec![0.3, -0.7, 1.2]).unwrap();
        let h = Tensor::new(&[d], vec![0.9, 0.4, -0.2]).unwrap();
        let s_dot = score_pair(&tape, &c, &h, &ScoreParams::Dot).unwrap().item();
        let s_gen = score_pair(&tape, &c, &h, &general).unwrap().item();
        assert!(close(s_dot, s_gen, 1e-12));
    }

    #[test]
    fn missing_general_weight_cannot_be_built() {
        // ScoreParams are type-gated: a general score always carries w_a, so
        // the "missing W_a" error is unrepresentable; check a shape slip
        // instead.
        let tape = Tape::inactive();
        let c = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let h = Tensor::new(&[3], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(score_pair(&tape, &c, &h, &ScoreParams::Dot).is_err());
    }

    #[test]
    fn single_cluster_alignment_is_all_ones() {
        let tape = Tape::inactive();
        let c = Tensor::new(&[1, 2], vec![0.4, -0.6]).unwrap();
        let h = Tensor::new(&[3, 2], vec![1.0, 0.0, 0.5, 0.5, -1.0, 2.0]).unwrap();
        let a = align(&tape, &c, &h, &ScoreParams::Dot).unwrap();
        assert_eq!(a.to_vec(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn equal_scores_align_uniformly() {
        let tape = Tape::inactive();
        // all centroids identical -> equal scores per token
        let c = Tensor::new(&[4, 2], vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7]).unwrap();
        let h = Tensor::new(&[2, 2], vec![1.0, -1.0, 0.2, 0.9]).unwrap();
        let a = align(&tape, &c, &h, &ScoreParams::Dot).unwrap();
        for v in a.to_vec() {
            assert!(close(v, 0.25, 1e-12));
        }
    }

    #[test]
    fn softmax_of_ln3_and_zero() {
        // scores (ln 3, 0) -> alignment (0.75, 0.25)
        let tape = Tape::inactive();
        let h = Tensor::new(&[1, 1], vec![1.0]).unwrap();
        let c = Tensor::new(&[2, 1], vec![3.0f64.ln(), 0.0]).unwrap();
        let a = align(&tape, &c, &h, &ScoreParams::Dot).unwrap().to_vec();
        assert!(close(a[0], 0.75, 1e-12));
        assert!(close(a[1], 0.25, 1e-12));
    }

    #[test]
    fn block_identity_reduction_recovers_h() {
        // W_d = K stacked DxD blocks with block j = I and a one-hot at j
        let (k, d) = (3, 4);
        let hot = 1;
        let mut w_d = vec![0.0; k * d * d];
        for r in 0..d {
            w_d[(hot * d + r) * d + r] = 1.0;
        }
        let tape = Tape::inactive();
        let layer = InteractionLayer {
            w_d: Tensor::new(&[k * d, d], w_d).unwrap(),
            ln_gain: Tensor::new(&[d], vec![1.0; d]).unwrap(),
            ln_bias: Tensor::new(&[d], vec![0.0; d]).unwrap(),
        };
        let a = Tensor::new(&[k], vec![0.0, 1.0, 0.0]).unwrap();
        let h = Tensor::new(&[d], vec![0.3, -0.8, 1.4, 0.9]).unwrap();
        let u = tape.matmul(&tape.kron_vec(&a, &h).unwrap(), &layer.w_d).unwrap();
        for (uv, hv) in u.to_vec().iter().zip(h.to_vec()) {
            assert!(close(*uv, hv, 1e-12));
        }
    }

    #[test]
    fn zero_alignment_reduces_to_layer_norm_of_h() {
        let (k, d) = (2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = InteractionLayer::init(k, d, &mut rng);
        let tape = Tape::inactive();
        let a = Tensor::new(&[k], vec![0.0, 0.0]).unwrap();
        let h = Tensor::new(&[d], vec![0.4, 1.0, -0.7]).unwrap();
        let s = aggregate_token(&tape, &layer, &a, &h).unwrap();
        let expect = tape
            .layer_norm(&h, &layer.ln_gain.detach(), &layer.ln_bias.detach())
            .unwrap();
        for (sv, ev) in s.to_vec().iter().zip(expect.to_vec()) {
            assert!(close(*sv, ev, 1e-12));
        }
    }

    #[test]
    fn cluster_permutation_equivariance() {
        // permuting centroid rows together with W_d blocks leaves u unchanged
        let (k, d, t) = (3, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c: Vec<f64> = (0..k * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let w_d: Vec<f64> = (0..k * d * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let h: Vec<f64> = (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let perm = [2usize, 0, 1];

        let mut c_p = vec![0.0; k * d];
        let mut w_p = vec![0.0; k * d * d];
        for (new_k, &old_k) in perm.iter().enumerate() {
            c_p[new_k * d..(new_k + 1) * d].copy_from_slice(&c[old_k * d..(old_k + 1) * d]);
            w_p[new_k * d * d..(new_k + 1) * d * d]
                .copy_from_slice(&w_d[old_k * d * d..(old_k + 1) * d * d]);
        }

        let tape = Tape::inactive();
        let run = |cv: &[f64], wv: &[f64]| -> Vec<f64> {
            let centroids = Tensor::new(&[k, d], cv.to_vec()).unwrap();
            let h = Tensor::new(&[t, d], h.clone()).unwrap();
            let a = align(&tape, &centroids, &h, &ScoreParams::Dot).unwrap();
            let w = Tensor::new(&[k * d, d], wv.to_vec()).unwrap();
            tape.matmul(&tape.kron_rows(&a, &h).unwrap(), &w).unwrap().to_vec()
        };
        let u1 = run(&c, &w_d);
        let u2 = run(&c_p, &w_p);
        for (a, b) in u1.iter().zip(&u2) {
            assert!(close(*a, *b, 1e-9), "permutation changed u: {a} vs {b}");
        }
    }

    #[test]
    fn argmax_stable_under_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let tape = Tape::inactive();
        for _ in 0..50 {
            let k = 4;
            let s: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let c = rng.random::<f64>() * 3.0 + 0.1;
            let scaled: Vec<f64> = s.iter().map(|&v| v * c).collect();
            let soft = |v: &[f64]| {
                tape.softmax(&Tensor::new(&[k], v.to_vec()).unwrap(), 0)
                    .unwrap()
                    .to_vec()
            };
            let arg = |v: &[f64]| {
                (0..k).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
            };
            assert_eq!(arg(&soft(&s)), arg(&soft(&scaled)));
        }
    }

    #[test]
    fn stack_of_one_layer_is_a_single_aggregate() {
        let (k, d, t) = (2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let layer = InteractionLayer::init(k, d, &mut rng);
        let c = Tensor::new(&[k, d], (0..k * d).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let h = Tensor::new(&[t, d], (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
        let tape = Tape::inactive();
        let (s, aligns) = interaction_stack(&tape, &c, &h, &[layer.clone()], &ScoreParams::Dot).unwrap();
        assert_eq!(aligns.len(), 1);
        let a = align(&tape, &c, &h, &ScoreParams::Dot).unwrap();
        let direct = aggregate(&tape, &layer, &a, &h).unwrap();
        assert_eq!(s.to_vec(), direct.to_vec());
        // every alignment row is a distribution over clusters
        for row in aligns[0].to_vec().chunks(k) {
            let total: f64 = row.iter().sum();
            assert!(close(total, 1.0, 1e-9));
        }
    }

    #[test]
    fn two_layer_stack_gradients_check() {
        let (k, d, t) = (2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let l1 = InteractionLayer::init(k, d, &mut rng);
        let l2 = InteractionLayer::init(k, d, &mut rng);
        let c: Vec<f64> = (0..k * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let h: Vec<f64> = (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let xs = vec![
            Tensor::new(&[k, d], c).unwrap(),
            Tensor::new(&[t, d], h).unwrap(),
            l1.w_d.detach(),
            l1.ln_gain.detach(),
            l1.ln_bias.detach(),
            l2.w_d.detach(),
            l2.ln_gain.detach(),
            l2.ln_bias.detach(),
        ];
        let err = grad_check_many(
            |tape, p| {
                let layers = [
                    InteractionLayer {
                        w_d: p[2].clone(),
                        ln_gain: p[3].clone(),
                        ln_bias: p[4].clone(),
                    },
                    InteractionLayer {
                        w_d: p[5].clone(),
                        ln_gain: p[6].clone(),
                        ln_bias: p[7].clone(),
                    },
                ];
                let (s, _) = interaction_stack(tape, &p[0], &p[1], &layers, &ScoreParams::Dot)?;
                tape.sum(&tape.mul(&s, &s)?)
            },
            &xs,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-4, "interaction stack rel err {err}");
    }
}
