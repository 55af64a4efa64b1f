//! Structural primitives: concat, slice, row extraction, reshape.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

impl Tape {
    /// Concatenate tensors along `axis` (rank 1 or 2; all other extents equal).
    pub fn concat(&self, axis: usize, parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::shape("concat of zero tensors"));
        }
        let rank = parts[0].rank();
        if axis >= rank || rank > 2 {
            return Err(Error::shape(format!(
                "concat axis {axis} invalid for rank {rank}"
            )));
        }
        for p in parts {
            if p.rank() != rank {
                return Err(Error::shape("concat rank mismatch"));
            }
        }
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape()).collect();
        for s in &shapes[1..] {
            for d in 0..rank {
                if d != axis && s[d] != shapes[0][d] {
                    return Err(Error::shape(format!(
                        "concat extent mismatch off-axis: {:?} vs {:?}",
                        shapes[0], s
                    )));
                }
            }
        }
        let mut out_shape = shapes[0].clone();
        out_shape[axis] = shapes.iter().map(|s| s[axis]).sum();

        let values = if rank == 1 || axis == 0 {
            // contiguous blocks
            let mut v = Vec::new();
            for p in parts {
                v.extend_from_slice(&p.values());
            }
            v
        } else {
            // rank 2, axis 1: interleave row segments
            let rows = out_shape[0];
            let total_cols = out_shape[1];
            let mut v = Vec::with_capacity(rows * total_cols);
            for r in 0..rows {
                for (p, s) in parts.iter().zip(&shapes) {
                    let cols = s[1];
                    v.extend_from_slice(&p.values()[r * cols..(r + 1) * cols]);
                }
            }
            v
        };
        let refs: Vec<&Tensor> = parts.to_vec();
        let out = self.output(&out_shape, values, self.tracks(&refs))?;
        if out.requires_grad() {
            let parts: Vec<Tensor> = parts.iter().map(|&p| p.clone()).collect();
            let o = out.clone();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if rank == 1 || axis == 0 {
                    let mut offset = 0;
                    for p in &parts {
                        let n = p.numel();
                        if p.requires_grad() {
                            p.accumulate_grad(&g[offset..offset + n]);
                        }
                        offset += n;
                    }
                } else {
                    let rows = shapes[0][0];
                    let total_cols: usize = shapes.iter().map(|s| s[1]).sum();
                    let mut col_offset = 0;
                    for (p, s) in parts.iter().zip(&shapes) {
                        let cols = s[1];
                        if p.requires_grad() {
                            let mut gp = vec![0.0; rows * cols];
                            for r in 0..rows {
                                gp[r * cols..(r + 1) * cols].copy_from_slice(
                                    &g[r * total_cols + col_offset
                                        ..r * total_cols + col_offset + cols],
                                );
                            }
                            p.accumulate_grad(&gp);
                        }
                        col_offset += cols;
                    }
                }
            });
        }
        Ok(out)
    }

    /// Contiguous slice of `len` extents along `axis`, starting at `start`.
    pub fn slice(&self, a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let shape = a.shape();
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "slice axis {axis} out of range for {shape:?}"
            )));
        }
        if len == 0 || start + len > shape[axis] {
            return Err(Error::shape(format!(
                "slice [{start}, {start}+{len}) out of range for axis extent {}",
                shape[axis]
            )));
        }
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let block = shape[axis] * stride;
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let values = {
            let av = a.values();
            let mut v = Vec::with_capacity(outer * len * stride);
            for o in 0..outer {
                let base = o * block + start * stride;
                v.extend_from_slice(&av[base..base + len * stride]);
            }
            v
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
                for o_i in 0..outer {
                    let dst = o_i * block + start * stride;
                    let src = o_i * len * stride;
                    ga[dst..dst + len * stride].copy_from_slice(&g[src..src + len * stride]);
                }
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&self, a: &Tensor, i: usize) -> Result<Tensor> {
        let shape = a.shape();
        if shape.len() != 2 {
            return Err(Error::shape(format!("row expects rank 2, got {shape:?}")));
        }
        let cols = shape[1];
        self.reshape(&self.slice(a, 0, i, 1)?, &[cols])
    }

    /// View with a new shape of identical element count.
    pub fn reshape(&self, a: &Tensor, new_shape: &[usize]) -> Result<Tensor> {
        let n: usize = new_shape.iter().product();
        if n != a.numel() || new_shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(format!(
                "reshape {:?} -> {new_shape:?} changes element count",
                a.shape()
            )));
        }
        let out = self.output(new_shape, a.to_vec(), self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                if let Some(g) = o.grad_to_vec() {
                    a.accumulate_grad(&g);
                }
            });
        }
        Ok(out)
    }

    /// Stack 1-D tensors of equal length into a matrix, one per row.
    pub fn stack_rows(&self, rows: &[&Tensor]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::shape("stack_rows of zero tensors"));
        }
        let d = rows[0].numel();
        for r in rows {
            if r.rank() != 1 || r.numel() != d {
                return Err(Error::shape("stack_rows expects equal-length vectors"));
            }
        }
        let flat = self.concat(0, rows)?;
        self.reshape(&flat, &[rows.len(), d])
    }
}
