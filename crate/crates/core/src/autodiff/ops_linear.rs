//! Linear-algebra primitives: matrix product, transpose, Kronecker products,
//! and embedding lookup.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

/// Interpret a tensor as a 2-D view: 1-D lhs becomes a row vector, 1-D rhs a
/// column vector. Returns (rows, cols, squeezed).
fn as_2d(shape: &[usize], as_row: bool) -> Result<(usize, usize, bool)> {
    match shape.len() {
        1 => {
            if as_row {
                Ok((1, shape[0], true))
            } else {
                Ok((shape[0], 1, true))
            }
        }
        2 => Ok((shape[0], shape[1], false)),
        _ => Err(Error::shape(format!("matmul expects rank 1 or 2, got {shape:?}"))),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

impl Tape {
    /// Matrix product. `[m,k] x [k,n] -> [m,n]`; a 1-D lhs acts as a row
    /// vector (`[k] x [k,n] -> [n]`), a 1-D rhs as a column (`[m,k] x [k] -> [m]`).
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, ka, sa) = as_2d(&a.shape(), true)?;
        let (kb, n, sb) = as_2d(&b.shape(), false)?;
        if ka != kb {
            return Err(Error::shape(format!(
                "matmul inner dims differ: {:?} x {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let k = ka;
        let values = matmul_raw(&a.values(), &b.values(), m, k, n);
        let out_shape: Vec<usize> = match (sa, sb) {
            (false, false) => vec![m, n],
            (true, false) => vec![n],
            (false, true) => vec![m],
            (true, true) => vec![1],
        };
        let out = self.output(&out_shape, values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if a.requires_grad() {
                    // dA = G . B^T
                    let ga: Vec<f64> = {
                        let bv = b.values();
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for l in 0..k {
                                let brow = &bv[l * n..(l + 1) * n];
                                let mut s = 0.0;
                                for (gv, bvj) in grow.iter().zip(brow) {
                                    s += gv * bvj;
                                }
                                ga[i * k + l] = s;
                            }
                        }
                        ga
                    };
                    a.accumulate_grad(&ga);
                }
                if b.requires_grad() {
                    // dB = A^T . G
                    let gb: Vec<f64> = {
                        let av = a.values();
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let arow = &av[i * k..(i + 1) * k];
                            for (l, &avl) in arow.iter().enumerate() {
                                let gbrow = &mut gb[l * n..(l + 1) * n];
                                for (gbv, &gv) in gbrow.iter_mut().zip(grow) {
                                    *gbv += avl * gv;
                                }
                            }
                        }
                        gb
                    };
                    b.accumulate_grad(&gb);
                }
            });
        }
        Ok(out)
    }

    /// 2-D transpose.
    pub fn transpose(&self, a: &Tensor) -> Result<Tensor> {
        let shape = a.shape();
        if shape.len() != 2 {
            return Err(Error::shape(format!("transpose expects rank 2, got {shape:?}")));
        }
        let (r, c) = (shape[0], shape[1]);
        let values = {
            let av = a.values();
            let mut v = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    v[j * r + i] = av[i * c + j];
                }
            }
            v
        };
        let out = self.output(&[c, r], values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let mut ga = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        ga[i * c + j] = g[j * r + i];
                    }
                }
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Kronecker product of two vectors: `out[i*q + j] = a[i] * b[j]`.
    pub fn kron_vec(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rank() != 1 || b.rank() != 1 {
            return Err(Error::shape(format!(
                "kron_vec expects two vectors, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (p, q) = (a.numel(), b.numel());
        let values = {
            let (av, bv) = (a.values(), b.values());
            let mut v = Vec::with_capacity(p * q);
            for &ai in av.iter() {
                for &bj in bv.iter() {
                    v.push(ai * bj);
                }
            }
            v
        };
        let out = self.output(&[p * q], values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                kron_backward(&a, &b, &g, 1, p, q);
            });
        }
        Ok(out)
    }

    /// Row-wise Kronecker product: row t of the output is
    /// `kron(a_row_t, b_row_t)`. `[T,p] x [T,q] -> [T, p*q]`.
    pub fn kron_rows(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::shape(format!(
                "kron_rows expects [T,p] and [T,q], got {sa:?} and {sb:?}"
            )));
        }
        let (t, p, q) = (sa[0], sa[1], sb[1]);
        let values = {
            let (av, bv) = (a.values(), b.values());
            let mut v = Vec::with_capacity(t * p * q);
            for r in 0..t {
                let arow = &av[r * p..(r + 1) * p];
                let brow = &bv[r * q..(r + 1) * q];
                for &ai in arow {
                    for &bj in brow {
                        v.push(ai * bj);
                    }
                }
            }
            v
        };
        let out = self.output(&[t, p * q], values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                kron_backward(&a, &b, &g, t, p, q);
            });
        }
        Ok(out)
    }

    /// Gather rows of an embedding table: `[V,D]` gathered at `ids` -> `[L,D]`.
    /// The adjoint scatters gradients back into the gathered rows only.
    pub fn embedding_gather(&self, table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let shape = table.shape();
        if shape.len() != 2 {
            return Err(Error::shape(format!(
                "embedding_gather expects a [V,D] table, got {shape:?}"
            )));
        }
        let (v, d) = (shape[0], shape[1]);
        if ids.is_empty() {
            return Err(Error::shape("embedding_gather with no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::data(format!("embedding id {bad} out of range (V={v})")));
        }
        let values = {
            let tv = table.values();
            let mut out = Vec::with_capacity(ids.len() * d);
            for &i in ids {
                out.extend_from_slice(&tv[i * d..(i + 1) * d]);
            }
            out
        };
        let out = self.output(&[ids.len(), d], values, self.tracks(&[table]))?;
        if out.requires_grad() {
            let (table, o) = (table.clone(), out.clone());
            let ids = ids.to_vec();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                table.with_grad_mut(|tg| {
                    for (r, &i) in ids.iter().enumerate() {
                        let src = &g[r * d..(r + 1) * d];
                        let dst = &mut tg[i * d..(i + 1) * d];
                        for (dv, sv) in dst.iter_mut().zip(src) {
                            *dv += sv;
                        }
                    }
                });
            });
        }
        Ok(out)
    }
}

fn kron_backward(a: &Tensor, b: &Tensor, g: &[f64], t: usize, p: usize, q: usize) {
    if a.requires_grad() {
        let ga: Vec<f64> = {
            let bv = b.values();
            let mut ga = vec![0.0; t * p];
            for r in 0..t {
                let grow = &g[r * p * q..(r + 1) * p * q];
                let brow = &bv[r * q..(r + 1) * q];
                for i in 0..p {
                    let mut s = 0.0;
                    for (gv, &bj) in grow[i * q..(i + 1) * q].iter().zip(brow) {
                        s += gv * bj;
                    }
                    ga[r * p + i] = s;
                }
            }
            ga
        };
        a.accumulate_grad(&ga);
    }
    if b.requires_grad() {
        let gb: Vec<f64> = {
            let av = a.values();
            let mut gb = vec![0.0; t * q];
            for r in 0..t {
                let grow = &g[r * p * q..(r + 1) * p * q];
                let arow = &av[r * p..(r + 1) * p];
                let gbrow = &mut gb[r * q..(r + 1) * q];
                for (i, &ai) in arow.iter().enumerate() {
                    for (gbv, gv) in gbrow.iter_mut().zip(&grow[i * q..(i + 1) * q]) {
                        *gbv += ai * gv;
                    }
                }
            }
            gb
        };
        b.accumulate_grad(&gb);
    }
}
