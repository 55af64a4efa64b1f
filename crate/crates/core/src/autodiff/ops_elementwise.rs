//! Elementwise primitives: arithmetic with leading-axis broadcast,
//! activations, and dropout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

/// How the right operand lines up against the left one.
#[derive(Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    /// rhs has a single element.
    Scalar,
    /// rhs shape equals a suffix of lhs shape; repeated over leading axes.
    Suffix,
}

fn resolve_broadcast(lhs: &[usize], rhs: &[usize]) -> Result<Broadcast> {
    if lhs == rhs {
        return Ok(Broadcast::Same);
    }
    let rn: usize = rhs.iter().product();
    if rn == 1 {
        return Ok(Broadcast::Scalar);
    }
    if rhs.len() < lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs {
        return Ok(Broadcast::Suffix);
    }
    Err(Error::shape(format!(
        "cannot broadcast {rhs:?} against {lhs:?} (suffix rule)"
    )))
}

/// Sum `g` (shaped like lhs) down to the rhs shape for the given broadcast.
fn reduce_to_rhs(g: &[f64], rhs_numel: usize, bc: Broadcast) -> Vec<f64> {
    match bc {
        Broadcast::Same => g.to_vec(),
        Broadcast::Scalar => vec![g.iter().sum()],
        Broadcast::Suffix => {
            let mut out = vec![0.0; rhs_numel];
            for chunk in g.chunks(rhs_numel) {
                for (o, c) in out.iter_mut().zip(chunk) {
                    *o += c;
                }
            }
            out
        }
    }
}

fn rhs_at(rv: &[f64], i: usize, bc: Broadcast) -> f64 {
    match bc {
        Broadcast::Same => rv[i],
        Broadcast::Scalar => rv[0],
        Broadcast::Suffix => rv[i % rv.len()],
    }
}

impl Tape {
    /// `a + b`, broadcasting `b` over leading axes of `a` when needed.
    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let bc = resolve_broadcast(&a.shape(), &b.shape())?;
        let values = {
            let (av, bv) = (a.values(), b.values());
            av.iter()
                .enumerate()
                .map(|(i, &x)| x + rhs_at(&bv, i, bc))
                .collect()
        };
        let out = self.output(&a.shape(), values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            let rn = b.numel();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if a.requires_grad() {
                    a.accumulate_grad(&g);
                }
                if b.requires_grad() {
                    b.accumulate_grad(&reduce_to_rhs(&g, rn, bc));
                }
            });
        }
        Ok(out)
    }

    /// `a - b` with the same broadcast rule as `add`.
    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let bc = resolve_broadcast(&a.shape(), &b.shape())?;
        let values = {
            let (av, bv) = (a.values(), b.values());
            av.iter()
                .enumerate()
                .map(|(i, &x)| x - rhs_at(&bv, i, bc))
                .collect()
        };
        let out = self.output(&a.shape(), values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            let rn = b.numel();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if a.requires_grad() {
                    a.accumulate_grad(&g);
                }
                if b.requires_grad() {
                    let mut gb = reduce_to_rhs(&g, rn, bc);
                    gb.iter_mut().for_each(|v| *v = -*v);
                    b.accumulate_grad(&gb);
                }
            });
        }
        Ok(out)
    }

    /// Elementwise `a * b`, broadcasting `b` like `add`.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let bc = resolve_broadcast(&a.shape(), &b.shape())?;
        let values = {
            let (av, bv) = (a.values(), b.values());
            av.iter()
                .enumerate()
                .map(|(i, &x)| x * rhs_at(&bv, i, bc))
                .collect()
        };
        let out = self.output(&a.shape(), values, self.tracks(&[a, b]))?;
        if out.requires_grad() {
            let (a, b, o) = (a.clone(), b.clone(), out.clone());
            let rn = b.numel();
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                if a.requires_grad() {
                    let ga: Vec<f64> = {
                        let bv = b.values();
                        g.iter()
                            .enumerate()
                            .map(|(i, &gi)| gi * rhs_at(&bv, i, bc))
                            .collect()
                    };
                    a.accumulate_grad(&ga);
                }
                if b.requires_grad() {
                    let prod: Vec<f64> = {
                        let av = a.values();
                        g.iter().zip(av.iter()).map(|(&gi, &ai)| gi * ai).collect()
                    };
                    b.accumulate_grad(&reduce_to_rhs(&prod, rn, bc));
                }
            });
        }
        Ok(out)
    }

    /// Multiply by a compile-time constant scalar.
    pub fn scale(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x * c).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                if let Some(mut g) = o.grad_to_vec() {
                    g.iter_mut().for_each(|v| *v *= c);
                    a.accumulate_grad(&g);
                }
            });
        }
        Ok(out)
    }

    /// Add a constant scalar to every element.
    pub fn add_scalar(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x + c).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
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

    pub fn relu(&self, a: &Tensor) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x.max(0.0)).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let av = a.values();
                    g.iter()
                        .zip(av.iter())
                        .map(|(&gi, &x)| if x > 0.0 { gi } else { 0.0 })
                        .collect()
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    pub fn tanh(&self, a: &Tensor) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x.tanh()).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let y = o.values();
                    g.iter()
                        .zip(y.iter())
                        .map(|(&gi, &yi)| gi * (1.0 - yi * yi))
                        .collect()
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    pub fn sigmoid(&self, a: &Tensor) -> Result<Tensor> {
        let values = a
            .values()
            .iter()
            .map(|&x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let y = o.values();
                    g.iter()
                        .zip(y.iter())
                        .map(|(&gi, &yi)| gi * yi * (1.0 - yi))
                        .collect()
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    pub fn exp(&self, a: &Tensor) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x.exp()).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let y = o.values();
                    g.iter().zip(y.iter()).map(|(&gi, &yi)| gi * yi).collect()
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Natural logarithm. Follows IEEE semantics on non-positive input.
    pub fn log(&self, a: &Tensor) -> Result<Tensor> {
        let values = a.values().iter().map(|&x| x.ln()).collect();
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                let ga: Vec<f64> = {
                    let av = a.values();
                    g.iter().zip(av.iter()).map(|(&gi, &x)| gi / x).collect()
                };
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Inverted dropout. With an RNG, each element survives with probability
    /// `1 - rate` and is scaled by `1/(1-rate)`; with `None` (eval) the output
    /// is the exact identity.
    pub fn dropout(
        &self,
        a: &Tensor,
        rate: f64,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate {rate} not in [0, 1)")));
        }
        let mask: Option<Vec<f64>> = rng.map(|rng| {
            let keep = 1.0 - rate;
            (0..a.numel())
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        });
        let values = match &mask {
            None => a.to_vec(),
            Some(m) => a.values().iter().zip(m).map(|(&x, &mi)| x * mi).collect(),
        };
        let out = self.output(&a.shape(), values, self.tracks(&[a]))?;
        if out.requires_grad() {
            let (a, o) = (a.clone(), out.clone());
            self.record(move || {
                let g = match o.grad_to_vec() {
                    Some(g) => g,
                    None => return,
                };
                match &mask {
                    None => a.accumulate_grad(&g),
                    Some(m) => {
                        let ga: Vec<f64> =
                            g.iter().zip(m).map(|(&gi, &mi)| gi * mi).collect();
                        a.accumulate_grad(&ga);
                    }
                }
            });
        }
        Ok(out)
    }
}
