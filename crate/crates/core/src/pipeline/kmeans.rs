use rand::Rng;

use crate::error::{config_err, Result};
use crate::nn::matrix::squared_distance;
use crate::nn::DenseMatrix;
use crate::rng::{stream, GlcRng, Stream};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: DenseMatrix,
    pub inertia: f64,
    pub iterations: usize,
}

fn seed_plus_plus(x: &DenseMatrix, k: usize, rng: &mut GlcRng) -> DenseMatrix {
    let n = x.rows();
    let mut centroids = DenseMatrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn assign(x: &DenseMatrix, centroids: &DenseMatrix, labels: &mut [usize], dist: &mut [f64]) -> bool {
    let mut changed = false;
    for i in 0..x.rows() {
        let (mut best, mut best_d) = (0, f64::INFINITY);
        for c in 0..centroids.rows() {
            let d = squared_distance(x.row(i), centroids.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        changed |= labels[i] != best;
        labels[i] = best;
        dist[i] = best_d;
    }
    changed
}

fn lloyd(x: &DenseMatrix, k: usize, rng: &mut GlcRng) -> KMeansResult {
    let (n, d) = x.shape();
    let mut centroids = seed_plus_plus(x, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut iterations = 0;
    assign(x, &centroids, &mut labels, &mut dist);
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = DenseMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.row_mut(labels[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // empty cluster: move it to the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n >= k >= 1");
                centroids.row_mut(c).copy_from_slice(x.row(far));
                dist[far] = 0.0;
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (m, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *m = s * inv;
                }
            }
        }
        if !assign(x, &centroids, &mut labels, &mut dist) {
            break;
        }
    }
    KMeansResult {
        labels,
        centroids,
        inertia: dist.iter().sum(),
        iterations,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the lowest-inertia result over
/// `restarts` runs drawn from one seeded stream.
pub fn kmeans(features: &DenseMatrix, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = features.rows();
    if k < 1 || n < k {
        return Err(config_err!("k-means needs 1 <= K <= N, got K = {k}, N = {n}"));
    }
    if restarts < 1 {
        return Err(config_err!("k-means needs at least one restart"));
    }
    if !features.is_finite() {
        return Err(crate::error::GlcError::Numeric("k-means input is not finite".into()));
    }
    let mut rng = stream(seed, Stream::KMeans);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts {
        let r = lloyd(features, k, &mut rng);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
