//! Dense row-major f64 tensor with an optional gradient buffer.
//!
//! A `Tensor` is a cheaply clonable handle; clones share the same storage.
//! Gradient buffers are allocated lazily the first time a gradient is
//! accumulated and never alias the value buffer.

use std::cell::{Ref, RefCell};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::rc::Rc;

use crate::error::{Error, Result};

struct Inner {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

/// Shared handle to a dense n-dimensional array of 64-bit reals.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::shape(format!("extents must be positive, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// New constant tensor (no gradient tracking).
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let n = check_shape(shape)?;
        if values.len() != n {
            return Err(Error::shape(format!(
                "value length {} does not match shape {:?} (numel {})",
                values.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape: shape.to_vec(),
                values,
                grad: None,
                requires_grad: false,
            })),
        })
    }

    /// New trainable parameter: gradients accumulate into its grad buffer.
    pub fn param(shape: &[usize], values: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, values)?;
        {
            let mut inner = t.inner.borrow_mut();
            let n = inner.values.len();
            inner.requires_grad = true;
            inner.grad = Some(vec![0.0; n]);
        }
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Result<Tensor> {
        let n = check_shape(shape)?;
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::new(&[1], vec![v]).expect("scalar shape is valid")
    }

    /// Build a matrix from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::shape("from_rows: no rows"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows: ragged rows"));
        }
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            values.extend_from_slice(r);
        }
        Tensor::new(&[rows.len(), cols], values)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn rank(&self) -> usize {
        self.inner.borrow().shape.len()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Borrow the value buffer.
    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |i| i.values.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().values.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let inner = self.inner.borrow();
        assert_eq!(inner.values.len(), 1, "item() on tensor with numel != 1");
        inner.values[0]
    }

    /// Borrow the gradient buffer, if one has been accumulated.
    pub fn grad(&self) -> Option<Ref<'_, [f64]>> {
        let inner = self.inner.borrow();
        if inner.grad.is_some() {
            Some(Ref::map(inner, |i| i.grad.as_deref().unwrap()))
        } else {
            None
        }
    }

    pub fn grad_to_vec(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    /// Copy of the values with gradient tracking severed.
    pub fn detach(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::new(&inner.shape, inner.values.clone()).expect("detach preserves shape")
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Mutate values in place (optimizer updates, test fixtures).
    pub fn with_values_mut<R>(&self, f: impl FnOnce(&mut [f64]) -> R) -> R {
        f(&mut self.inner.borrow_mut().values)
    }

    /// Mutate the gradient buffer in place (allocating it if absent).
    pub fn with_grad_mut<R>(&self, f: impl FnOnce(&mut [f64]) -> R) -> R {
        let mut inner = self.inner.borrow_mut();
        let n = inner.values.len();
        let g = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        f(g)
    }

    /// Add `delta` into the gradient buffer. No-op unless `requires_grad`.
    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let n = inner.values.len();
        debug_assert_eq!(delta.len(), n);
        let g = inner.grad.get_or_insert_with(|| vec![0.0; n]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Seed the gradient of a scalar tensor with 1 (backward entry point).
    pub(crate) fn seed_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        inner.grad = Some(vec![1.0; inner.values.len()]);
    }

    pub(crate) fn mark_requires_grad(&self) {
        self.inner.borrow_mut().requires_grad = true;
    }

    /// Two handles referring to the same storage?
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Write as TSV: one shape header line, then row-major values grouped by
    /// the last axis (one group per line). Values round-trip exactly.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let inner = self.inner.borrow();
        let mut w = BufWriter::new(File::create(path)?);
        let header: Vec<String> = inner.shape.iter().map(|e| e.to_string()).collect();
        writeln!(w, "{}", header.join("\t"))?;
        let last = *inner.shape.last().unwrap_or(&1);
        for chunk in inner.values.chunks(last) {
            let line: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join("\t"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Tensor> {
        let f = File::open(path)?;
        let mut lines = BufReader::new(f).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty tensor file", path.display())))??;
        let shape: Vec<usize> = header
            .split('\t')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| Error::data(format!("{}: bad shape entry {s:?}", path.display())))
            })
            .collect::<Result<_>>()?;
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            for tok in line.split('\t') {
                values.push(tok.parse::<f64>().map_err(|_| {
                    Error::data(format!("{}: bad value {tok:?}", path.display()))
                })?);
            }
        }
        Tensor::new(&shape, values)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .field("values", &inner.values)
            .finish()
    }
}
