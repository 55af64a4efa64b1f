//! Student's-t soft assignment, auxiliary target distribution, and the
//! clustering KL objective. The assignment and KL register hand-derived
//! adjoints on the tape (verified against finite differences).

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};

/// Floor applied to q inside the KL so extreme distances cannot produce a
/// log of zero.
const Q_FLOOR: f64 = 1e-12;

/// Soft cluster assignment `Q` of latent rows `z` (`[N,D]`) against
/// centroids (`[K,D]`) under a Student's-t kernel with `alpha` degrees of
/// freedom:
///
/// `q_ik = (1 + |z_i - c_k|^2 / alpha)^(-(alpha+1)/2)`, normalized over k.
///
/// Differentiable with respect to both `z` and the centroids.
pub fn soft_assign(tape: &Tape, z: &Tensor, centroids: &Tensor, alpha: f64) -> Result<Tensor> {
    let zs = z.shape();
    let cs = centroids.shape();
    if zs.len() != 2 || cs.len() != 2 || zs[1] != cs[1] {
        return Err(Error::shape(format!(
            "soft_assign expects [N,D] and [K,D], got {zs:?} and {cs:?}"
        )));
    }
    if alpha <= 0.0 {
        return Err(Error::config(format!("alpha {alpha} must be positive")));
    }
    let (n, d, k) = (zs[0], zs[1], cs[0]);

    // kernel values t_ik and the bases s_ik = 1 + d2/alpha, kept for backward
    let mut t = vec![0.0; n * k];
    let mut s = vec![0.0; n * k];
    let q_values = {
        let zv = z.values();
        let cv = centroids.values();
        let expo = -(alpha + 1.0) / 2.0;
        let mut q = vec![0.0; n * k];
        for i in 0..n {
            let zrow = &zv[i * d..(i + 1) * d];
            let mut total = 0.0;
            for c in 0..k {
                let crow = &cv[c * d..(c + 1) * d];
                let d2: f64 = zrow
                    .iter()
                    .zip(crow)
                    .map(|(&a, &b)| (a - b) * (a - b))
                    .sum();
                let base = 1.0 + d2 / alpha;
                let tv = base.powf(expo);
                s[i * k + c] = base;
                t[i * k + c] = tv;
                total += tv;
            }
            for c in 0..k {
                q[i * k + c] = t[i * k + c] / total;
            }
        }
        q
    };

    let out = tape.output(&[n, k], q_values, tape.tracks(&[z, centroids]))?;
    if out.requires_grad() {
        let (z, centroids, q) = (z.clone(), centroids.clone(), out.clone());
        tape.record(move || {
            let g = match q.grad_to_vec() {
                Some(g) => g,
                None => return,
            };
            let qv = q.values();
            let zv = z.values();
            let cv = centroids.values();
            // dL/dt_ik = (g_ik - sum_k' g_ik' q_ik') / T_i, with T_i = sum t
            // dt/dd2   = -(alpha+1)/(2 alpha) * t / s
            let mut gz = vec![0.0; n * d];
            let mut gc = vec![0.0; k * d];
            let factor = -(alpha + 1.0) / (2.0 * alpha);
            for i in 0..n {
                let row_t = &t[i * k..(i + 1) * k];
                let total: f64 = row_t.iter().sum();
                let dot: f64 = (0..k).map(|c| g[i * k + c] * qv[i * k + c]).sum();
                for c in 0..k {
                    let dl_dt = (g[i * k + c] - dot) / total;
                    let coeff = dl_dt * factor * row_t[c] / s[i * k + c];
                    for j in 0..d {
                        let diff = zv[i * d + j] - cv[c * d + j];
                        gz[i * d + j] += coeff * 2.0 * diff;
                        gc[c * d + j] -= coeff * 2.0 * diff;
                    }
                }
            }
            drop(qv);
            drop(zv);
            drop(cv);
            if z.requires_grad() {
                z.accumulate_grad(&gz);
            }
            if centroids.requires_grad() {
                centroids.accumulate_grad(&gc);
            }
        });
    }
    Ok(out)
}

/// Auxiliary target distribution: squared assignments normalized by the
/// per-cluster batch frequency, then renormalized per sample. The result is
/// a constant — no gradient flows into it.
pub fn target_distribution(q: &Tensor) -> Result<Tensor> {
    let shape = q.shape();
    if shape.len() != 2 {
        return Err(Error::shape(format!("target_distribution expects [N,K], got {shape:?}")));
    }
    let (n, k) = (shape[0], shape[1]);
    let qv = q.values();
    let mut freq = vec![0.0; k];
    for i in 0..n {
        for c in 0..k {
            freq[c] += qv[i * k + c];
        }
    }
    if freq.iter().any(|&f| f <= 0.0) {
        return Err(Error::numeric("target_distribution: empty cluster column"));
    }
    let mut p = vec![0.0; n * k];
    for i in 0..n {
        let mut row_sum = 0.0;
        for c in 0..k {
            // q * (q / freq): at batch size 1 the second factor is exactly 1
            let r = qv[i * k + c] * (qv[i * k + c] / freq[c]);
            p[i * k + c] = r;
            row_sum += r;
        }
        for c in 0..k {
            p[i * k + c] /= row_sum;
        }
    }
    drop(qv);
    Tensor::new(&[n, k], p)
}

/// Clustering KL objective `sum_i sum_k p log(p/q)` with `0 log 0 = 0` and a
/// 1e-12 floor on q. `p` is constant; gradients flow to q's ancestors only.
pub fn cluster_kl_loss(tape: &Tape, p: &Tensor, q: &Tensor) -> Result<Tensor> {
    if p.shape() != q.shape() {
        return Err(Error::shape(format!(
            "cluster_kl_loss shapes differ: {:?} vs {:?}",
            p.shape(),
            q.shape()
        )));
    }
    let total: f64 = {
        let (pv, qv) = (p.values(), q.values());
        pv.iter()
            .zip(qv.iter())
            .map(|(&pi, &qi)| {
                if pi > 0.0 {
                    pi * (pi / qi.max(Q_FLOOR)).ln()
                } else {
                    0.0
                }
            })
            .sum()
    };
    let out = tape.output(&[1], vec![total], tape.tracks(&[q]))?;
    if out.requires_grad() {
        let (p, q, o) = (p.clone(), q.clone(), out.clone());
        tape.record(move || {
            let g = match o.grad_to_vec() {
                Some(g) => g,
                None => return,
            };
            let gq: Vec<f64> = {
                let (pv, qv) = (p.values(), q.values());
                pv.iter()
                    .zip(qv.iter())
                    .map(|(&pi, &qi)| -g[0] * pi / qi.max(Q_FLOOR))
                    .collect()
            };
            q.accumulate_grad(&gq);
        });
    }
    Ok(out)
}
