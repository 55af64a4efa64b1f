//! K-means++ / Lloyd and diagonal-covariance EM for centroid initialization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{Centroids, InitMethod};
use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn validate(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::config("cluster count must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::data(format!(
            "cannot fit {k} clusters to {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::shape("points have inconsistent dimensions"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite point coordinates"));
    }
    Ok(dim)
}

/// k-means++ seeding: each new center is drawn with probability proportional
/// to its squared distance from the nearest chosen center.
fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())].clone());
    let mut best = vec![f64::INFINITY; points.len()];
    while centers.len() < k {
        let newest = centers.last().unwrap();
        for (b, p) in best.iter_mut().zip(points) {
            *b = b.min(sq_dist(p, newest));
        }
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 && total.is_finite() {
            let mut draw = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in best.iter().enumerate() {
                draw -= w;
                if draw <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining points coincide with chosen centers
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
    }
    centers
}

fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Lloyd iterations from a k-means++ seed. Empty clusters are reseeded to
/// the point lying farthest from its assigned centroid.
pub fn kmeans_init(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Centroids> {
    let dim = validate(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seed(points, k, &mut rng);

    for _ in 0..max_iters {
        let assignment = assign_all(points, &centers);
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut new_centers: Vec<Vec<f64>> = sums
            .iter()
            .zip(&counts)
            .zip(&centers)
            .map(|((s, &c), old)| {
                if c > 0 {
                    s.iter().map(|&v| v / c as f64).collect()
                } else {
                    old.clone()
                }
            })
            .collect();

        // reseed empties to the worst-fit points, one per empty cluster
        let mut taken: Vec<usize> = Vec::new();
        for (cluster, &count) in counts.iter().enumerate() {
            if count > 0 {
                continue;
            }
            let mut far_idx = 0;
            let mut far_d = -1.0;
            for (i, p) in points.iter().enumerate() {
                if taken.contains(&i) {
                    continue;
                }
                let d = sq_dist(p, &centers[assignment[i]]);
                if d > far_d {
                    far_d = d;
                    far_idx = i;
                }
            }
            new_centers[cluster] = points[far_idx].clone();
            taken.push(far_idx);
        }

        let shift = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if shift < tol {
            break;
        }
    }

    Ok(Centroids {
        k,
        dim,
        weights: centers.into_iter().flatten().collect(),
        init_method: InitMethod::KMeans,
    })
}

/// Diagonal-covariance EM, initialized from k-means. Returns component means.
pub fn gmm_init(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<Centroids> {
    const VAR_FLOOR: f64 = 1e-6;
    let dim = validate(points, k)?;
    let m = points.len();
    let start = kmeans_init(points, k, seed, 100, 1e-6)?;

    let mut means: Vec<Vec<f64>> = (0..k).map(|i| start.row(i).to_vec()).collect();
    let assignment = assign_all(points, &means);
    let mut weights = vec![0.0f64; k];
    let mut vars = vec![vec![0.0f64; dim]; k];
    for (p, &a) in points.iter().zip(&assignment) {
        weights[a] += 1.0;
        for (v, (&x, &mu)) in vars[a].iter_mut().zip(p.iter().zip(&means[a])) {
            *v += (x - mu) * (x - mu);
        }
    }
    for c in 0..k {
        let n = weights[c].max(1.0);
        for v in vars[c].iter_mut() {
            *v = (*v / n).max(VAR_FLOOR);
        }
        weights[c] = (weights[c] / m as f64).max(1e-9);
    }

    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![0.0f64; m * k];
    for _ in 0..max_iters {
        // E-step in the log domain
        let mut ll = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut logs = vec![0.0f64; k];
            for c in 0..k {
                let mut lp = weights[c].ln();
                for j in 0..dim {
                    let var = vars[c][j];
                    let diff = p[j] - means[c][j];
                    lp += -0.5 * (2.0 * std::f64::consts::PI * var).ln()
                        - diff * diff / (2.0 * var);
                }
                logs[c] = lp;
            }
            let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logs.iter().map(|&l| (l - hi).exp()).sum();
            ll += hi + z.ln();
            for c in 0..k {
                resp[i * k + c] = (logs[c] - hi).exp() / z;
            }
        }

        // M-step with variance floor
        for c in 0..k {
            let nk: f64 = (0..m).map(|i| resp[i * k + c]).sum();
            let nk_safe = nk.max(1e-12);
            for j in 0..dim {
                means[c][j] =
                    (0..m).map(|i| resp[i * k + c] * points[i][j]).sum::<f64>() / nk_safe;
            }
            for j in 0..dim {
                let s: f64 = (0..m)
                    .map(|i| {
                        let d = points[i][j] - means[c][j];
                        resp[i * k + c] * d * d
                    })
                    .sum();
                vars[c][j] = (s / nk_safe).max(VAR_FLOOR);
            }
            weights[c] = (nk / m as f64).max(1e-9);
        }

        if (ll - prev_ll).abs() < 1e-9 * (1.0 + ll.abs()) {
            break;
        }
        prev_ll = ll;
    }

    Ok(Centroids {
        k,
        dim,
        weights: means.into_iter().flatten().collect(),
        init_method: InitMethod::Gmm,
    })
}
