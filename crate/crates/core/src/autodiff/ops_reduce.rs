//! Reductions and normalizers: softmax, layer norm, masked max, sums,
//! norms, and the two loss primitives.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

/// Iterate a tensor as lanes along one axis: yields the flat index of lane
/// element `j` as `base + j * stride`.
struct Lanes {
    len: usize,
    stride: usize,
    outer: usize,
}

impl Lanes {
    fn new(shape: &[usize], axis: usize) -> Result<Lanes> {
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "axis {axis} out of range for shape {shape:?}"
            )));
        }
        Ok(Lanes {
            len: shape[axis],
            stride: shape[axis + 1..].iter().product(),
            outer: shape[..axis].iter().product(),
        })
    }

    fn bases(&self) -> impl Iterator<Item = usize> + '_ {
        let block = self.len * self.stride;
        (0..self.outer).flat_map(move |o| (0..self.stride).map(move |s| o * block + s))
    }
}

impl Tape {
    /// Softmax along `axis`. Rows (lanes) sum to 1 and are strictly positive.
    pub fn softmax(&self, a: &Tensor, axis: usize) -> Result<Tensor> {
        let shape = a.shape();
        let lanes = Lanes::new(&shape, axis)?;
        let values = {
            let av = a.values();
            let mut out = vec![0.0; av.len()];
            for base in lanes.bases() {
                let idx = |j: usize| base + j * lanes.stride;
                let mut hi = f64::NEG_INFINITY;
                for j in 0..lanes.len {
                    hi = hi.max(av[idx(j)]);
                }
                let mut total = 0.0;
                for j in 0..lanes.len {
                    let e = (av[idx(j)] - hi).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..lanes.len {
                    out[idx(j)] /= total;
                }
            }
            out
        };
        let out = self.output(&shape, values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let y = o.values();
                    let mut ga = vec![0.0; g.len()];
                    for base in lanes.bases() {
                        let idx = |j: usize| base + j * lanes.stride;
                        let mut dot = 0.0;
                        for j in 0..lanes.len {
                            dot += g[idx(j)] * y[idx(j)];
                        }
                        for j in 0..lanes.len {
                            ga[idx(j)] = (g[idx(j)] - dot) * y[idx(j)];
                        }
                    }
                    ga
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Layer normalization over the last axis with learnable gain and bias,
    /// epsilon 1e-5.
    pub fn layer_norm(&self, x: &Tensor, gain: &Tensor, bias: &Tensor) -> Result<Tensor> {
        const EPS: f64 = 1e-5;
        let shape = x.shape();
        let n = *shape.last().expect("positive rank");
        if gain.shape() != [n] || bias.shape() != [n] {
            return Err(Error::shape(format!(
                "layer_norm gain/bias must be [{n}], got {:?} and {:?}",
                gain.shape(),
                bias.shape()
            )));
        }
        let lanes = x.numel() / n;
        let mut xhat = vec![0.0; x.numel()];
        let mut inv_std = vec![0.0; lanes];
        let values = {
            let xv = x.values();
            let (gv, bv) = (gain.values(), bias.values());
            let mut out = vec![0.0; xv.len()];
            for l in 0..lanes {
                let row = &xv[l * n..(l + 1) * n];
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let inv = 1.0 / (var + EPS).sqrt();
                inv_std[l] = inv;
                for j in 0..n {
                    let h = (row[j] - mean) * inv;
                    xhat[l * n + j] = h;
                    out[l * n + j] = h * gv[j] + bv[j];
                }
            }
            out
        };
        let out = self.output(&shape, values, self.tracks(&[x, gain, bias]))?;
        if out.requires_grad() {
            let (x, gain, bias, o) = (x.clone(), gain.clone(), bias.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if gain.requires_grad() {
                    let mut dg = vec![0.0; n];
                    for l in 0..lanes {
                        for j in 0..n {
                            dg[j] += g[l * n + j] * xhat[l * n + j];
                        }
                    }
                    gain.accumulate_grad(&dg);
                }
                if bias.requires_grad() {
                    let mut db = vec![0.0; n];
                    for l in 0..lanes {
                        for j in 0..n {
                            db[j] += g[l * n + j];
                        }
                    }
                    bias.accumulate_grad(&db);
                }
                if x.requires_grad() {
                    let gx: Vec<f64> = {
                        let gv = gain.values();
                        let mut gx = vec![0.0; g.len()];
                        for l in 0..lanes {
                            let inv = inv_std[l];
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for j in 0..n {
                                let dxh = g[l * n + j] * gv[j];
                                m1 += dxh;
                                m2 += dxh * xhat[l * n + j];
                            }
                            m1 /= n as f64;
                            m2 /= n as f64;
                            for j in 0..n {
                                let dxh = g[l * n + j] * gv[j];
                                gx[l * n + j] = inv * (dxh - m1 - xhat[l * n + j] * m2);
                            }
                        }
                        gx
                    };
                    x.accumulate_grad(&gx);
                }
            });
        }
        Ok(out)
    }

    /// Max over `axis`, restricted to positions where `mask` is true.
    /// A fully masked reduction is an error. Gradient routes to the (first)
    /// argmax of each lane.
    pub fn max_over_axis(&self, a: &Tensor, axis: usize, mask: Option<&[bool]>) -> Result<Tensor> {
        let shape = a.shape();
        let lanes = Lanes::new(&shape, axis)?;
        if let Some(m) = mask {
            if m.len() != lanes.len {
                return Err(Error::shape(format!(
                    "mask length {} does not match axis extent {}",
                    m.len(),
                    lanes.len
                )));
            }
            if !m.iter().any(|&v| v) {
                return Err(Error::numeric("max_over_axis: all positions masked"));
            }
        }
        let valid = |j: usize| mask.map_or(true, |m| m[j]);
        let mut out_shape: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| (i != axis).then_some(e))
            .collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let mut argmax = Vec::new();
        let values = {
            let av = a.values();
            let mut out = Vec::new();
            for base in lanes.bases() {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for j in 0..lanes.len {
                    if !valid(j) {
                        continue;
                    }
                    let v = av[base + j * lanes.stride];
                    if v > best {
                        best = v;
                        best_idx = base + j * lanes.stride;
                    }
                }
                argmax.push(best_idx);
                out.push(best);
            }
            out
        };
        let out = self.output(&out_shape, values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            let numel = a.numel();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let mut ga = vec![0.0; numel];
                for (lane, &idx) in argmax.iter().enumerate() {
                    ga[idx] += g[lane];
                }
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Sum of all elements.
    pub fn sum(&self, a: &Tensor) -> Result<Tensor> {
        let total: f64 = a.values().iter().sum();
        let out = self.output(&[1], vec![total], self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            let n = a.numel();
            self.record(move || {
                if let Some(g) = o.grad_to_vec() {
                    a.accumulate_grad(&vec![g[0]; n]);
                }
            });
        }
        Ok(out)
    }

    /// Mean of all elements.
    pub fn mean(&self, a: &Tensor) -> Result<Tensor> {
        let n = a.numel();
        self.scale(&self.sum(a)?, 1.0 / n as f64)
    }

    /// Euclidean norm of all elements.
    pub fn l2_norm(&self, a: &Tensor) -> Result<Tensor> {
        let norm = a.values().iter().map(|&v| v * v).sum::<f64>().sqrt();
        let out = self.output(&[1], vec![norm], self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let denom = norm.max(1e-12);
                let ga: Vec<f64> = a.values().iter().map(|&v| g[0] * v / denom).collect();
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Squared-error loss: per-sample sum of squared differences, averaged
    /// over the leading axis (rank >= 2); for vectors the plain sum of squares.
    pub fn mse(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape != b.shape() {
            return Err(Error::shape(format!(
                "mse shapes differ: {:?} vs {:?}",
                shape,
                b.shape()
            )));
        }
        let n_batch = if shape.len() >= 2 { shape[0] } else { 1 } as f64;
        let total: f64 = {
            let (av, bv) = (a.values(), b.values());
            av.iter().zip(bv.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
        };
        let out = self.output(&[1], vec![total / n_batch], self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let c = 2.0 * g[0] / n_batch;
                let diff: Vec<f64> = {
                    let (av, bv) = (a.values(), b.values());
                    av.iter().zip(bv.iter()).map(|(&x, &y)| c * (x - y)).collect()
                };
                if a.requires_grad() {
                    a.accumulate_grad(&diff);
                }
                if b.requires_grad() {
                    let neg: Vec<f64> = diff.iter().map(|&v| -v).collect();
                    b.accumulate_grad(&neg);
                }
            });
        }
        Ok(out)
    }

    /// Fused softmax + cross entropy against a target distribution (usually
    /// one-hot). For `[N,C]` inputs the loss is the mean over rows; gradients
    /// flow into the logits only.
    pub fn cross_entropy_with_softmax(&self, logits: &Tensor, target: &Tensor) -> Result<Tensor> {
        let shape = logits.shape();
        if shape != target.shape() {
            return Err(Error::shape(format!(
                "cross entropy shapes differ: {:?} vs {:?}",
                shape,
                target.shape()
            )));
        }
        let (rows, cols) = match shape.len() {
            1 => (1, shape[0]),
            2 => (shape[0], shape[1]),
            _ => {
                return Err(Error::shape(format!(
                    "cross entropy expects rank 1 or 2, got {shape:?}"
                )))
            }
        };
        let mut probs = vec![0.0; rows * cols];
        let total: f64 = {
            let (xv, tv) = (logits.values(), target.values());
            let mut total = 0.0;
            for r in 0..rows {
                let x = &xv[r * cols..(r + 1) * cols];
                let t = &tv[r * cols..(r + 1) * cols];
                let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..cols {
                    let e = (x[j] - hi).exp();
                    probs[r * cols + j] = e;
                    z += e;
                }
                for j in 0..cols {
                    probs[r * cols + j] /= z;
                }
                let lse = hi + z.ln();
                let dot: f64 = x.iter().zip(t).map(|(&xj, &tj)| xj * tj).sum();
                total += lse - dot;
            }
            total / rows as f64
        };
        let out = self.output(&[1], vec![total], self.tracks(&[logits]))?;
        if out.requires_grad() {
            let (logits, target, o) = (logits.clone(), target.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let c = g[0] / rows as f64;
                let ga: Vec<f64> = {
                    let tv = target.values();
                    probs
                        .iter()
                        .zip(tv.iter())
                        .map(|(&p, &t)| c * (p - t))
                        .collect()
                };
                logits.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn softmax_symmetry() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[2], vec![0.0, 0.0]).unwrap();
        let y = tape.softmax(&x, 0).unwrap();
        assert_eq!(y.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[3, 4], (0..12).map(|i| (i as f64) * 0.7 - 3.0).collect()).unwrap();
        let y = tape.softmax(&x, 1).unwrap();
        let v = y.to_vec();
        for r in 0..3 {
            let s: f64 = v[r * 4..(r + 1) * 4].iter().sum();
            assert_close(s, 1.0, 1e-12);
            assert!(v[r * 4..(r + 1) * 4].iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn softmax_over_axis_zero() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[2, 2], vec![1.0, 5.0, 1.0, 5.0]).unwrap();
        let y = tape.softmax(&x, 0).unwrap();
        assert_eq!(y.to_vec(), vec![0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn layer_norm_constant_vector_is_zero_before_affine() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[4], vec![3.0; 4]).unwrap();
        let gain = Tensor::new(&[4], vec![1.0; 4]).unwrap();
        let bias = Tensor::zeros(&[4]).unwrap();
        let y = tape.layer_norm(&x, &gain, &bias).unwrap();
        for v in y.to_vec() {
            assert_close(v, 0.0, 1e-12);
        }
    }

    #[test]
    fn masked_max_ignores_masked_rows() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[3, 2], vec![9.0, 0.0, 1.0, 2.0, 5.0, 7.0]).unwrap();
        let y = tape
            .max_over_axis(&x, 0, Some(&[false, true, true]))
            .unwrap();
        assert_eq!(y.to_vec(), vec![5.0, 7.0]);
    }

    #[test]
    fn fully_masked_max_is_an_error() {
        let tape = Tape::inactive();
        let x = Tensor::zeros(&[2, 2]).unwrap();
        assert!(tape.max_over_axis(&x, 0, Some(&[false, false])).is_err());
    }

    #[test]
    fn mse_identity_target_has_zero_grad() {
        let tape = Tape::new();
        let x = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = tape.mse(&x, &x).unwrap();
        assert_eq!(loss.item(), 0.0);
        tape.backward(&loss).unwrap();
        assert_eq!(x.grad_to_vec().unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn mse_batch_mean_convention() {
        // per-sample squared errors 1 and 3 -> mean 2
        let tape = Tape::inactive();
        let a = Tensor::new(&[2, 3], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2, 3]).unwrap();
        assert_close(tape.mse(&a, &b).unwrap().item(), 2.0, 1e-15);
    }

    #[test]
    fn cross_entropy_grad_is_softmax_minus_onehot() {
        let tape = Tape::new();
        let x = Tensor::param(&[3], vec![0.2, -1.0, 0.5]).unwrap();
        let y = Tensor::new(&[3], vec![0.0, 1.0, 0.0]).unwrap();
        let loss = tape.cross_entropy_with_softmax(&x, &y).unwrap();
        tape.backward(&loss).unwrap();
        let p = Tape::inactive().softmax(&x.detach(), 0).unwrap().to_vec();
        let g = x.grad_to_vec().unwrap();
        assert_close(g[0], p[0], 1e-12);
        assert_close(g[1], p[1] - 1.0, 1e-12);
        assert_close(g[2], p[2], 1e-12);
    }

    #[test]
    fn l2_norm_value() {
        let tape = Tape::inactive();
        let x = Tensor::new(&[2], vec![3.0, 4.0]).unwrap();
        assert_close(tape.l2_norm(&x).unwrap().item(), 5.0, 1e-15);
    }
}
