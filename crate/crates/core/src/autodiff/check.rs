//! Central finite-difference gradient checking.
//!
//! The checker is the independent oracle for every adjoint in this crate:
//! it compares tape gradients against `(f(x+eps e_i) - f(x-eps e_i)) / 2 eps`
//! elementwise and reports the worst relative error. Functions containing
//! relu kinks should be evaluated at inputs bounded away from zero.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / f64::max(1e-8, a.abs() + n.abs())
}

/// Max relative error between tape gradients and central differences for a
/// scalar-valued function of one tensor.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    grad_check_many(|tape, xs| f(tape, &xs[0]), &[x.clone()], eps)
}

/// Max relative error over every element of every input tensor.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    // Analytic pass: fresh params so the caller's tensors stay untouched.
    let params: Vec<Tensor> = xs
        .iter()
        .map(|x| Tensor::param(&x.shape(), x.to_vec()))
        .collect::<Result<_>>()?;
    let tape = Tape::new();
    let loss = f(&tape, &params)?;
    if loss.numel() != 1 {
        return Err(Error::shape("grad_check requires a scalar-valued function"));
    }
    tape.backward(&loss)?;

    let mut worst = 0.0f64;
    for (k, x) in xs.iter().enumerate() {
        let analytic = params[k]
            .grad_to_vec()
            .unwrap_or_else(|| vec![0.0; x.numel()]);
        let base = x.to_vec();
        let shape = x.shape();
        for i in 0..base.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut vals = base.clone();
                vals[i] += delta;
                let mut probe: Vec<Tensor> = xs.iter().map(|t| t.detach()).collect();
                probe[k] = Tensor::new(&shape, vals)?;
                Ok(f(&Tape::inactive(), &probe)?.item())
            };
            let numeric = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
            worst = worst.max(rel_err(analytic[i], numeric));
        }
    }
    Ok(worst)
}
