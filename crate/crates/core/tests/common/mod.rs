#![allow(dead_code)]

pub mod checks;

use glc_core::data::{Batch, IndicatorMatrix, MultiViewDataset};
use glc_core::graph::PairSets;
use glc_core::model::{init_model, GlcModel, ModelConfig};
use glc_core::nn::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

pub fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn cosine_oracle(h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = h.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            let mut ni = 0.0;
            let mut nj = 0.0;
            for k in 0..h[i].len() {
                dot += h[i][k] * h[j][k];
                ni += h[i][k] * h[i][k];
                nj += h[j][k] * h[j][k];
            }
            g[i][j] = dot / (ni.sqrt() * nj.sqrt());
        }
    }
    g
}

pub fn ggc_oracle(g: &[Vec<f64>], pairs: &PairSets, tau: f64, include_positive: bool) -> f64 {
    let mut loss = 0.0;
    for i in 0..g.len() {
        for &j in &pairs.positives[i] {
            let num = (g[i][j] / tau).exp();
            let mut den = 0.0;
            for &k in &pairs.negatives[i] {
                den += (g[i][k] / tau).exp();
            }
            if include_positive {
                den += num;
            }
            loss -= (num / den).ln();
        }
    }
    loss
}

/// Cross-view loss with positives `(h_i^u, h_i^v)` weighted by `w[i]` and
/// negatives every other sample of both views.
pub fn cross_view_oracle(hu: &[Vec<f64>], hv: &[Vec<f64>], tau: f64, w: Option<&[f64]>) -> f64 {
    let n = hu.len();
    let stacked: Vec<Vec<f64>> = hu.iter().chain(hv).cloned().collect();
    let p = cosine_oracle(&stacked);
    let mut loss = 0.0;
    for i in 0..n {
        let weight = w.map_or(1.0, |w| w[i]);
        let num = weight * (p[i][n + i] / tau).exp();
        let mut den = 0.0;
        for j in 0..n {
            if j != i {
                den += (p[i][j] / tau).exp();
                den += (p[i][n + j] / tau).exp();
            }
        }
        loss -= (num / den).ln();
    }
    loss
}

pub fn kernel_oracle(a: &[Vec<f64>], b: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| {
                    let d: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                    (-d / sigma).exp()
                })
                .collect()
        })
        .collect()
}

/// `A · Bᵀ` by three nested loops.
pub fn product_oracle(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.len()]; a.len()];
    for i in 0..a.len() {
        for j in 0..b.len() {
            for k in 0..a[i].len() {
                out[i][j] += a[i][k] * b[j][k];
            }
        }
    }
    out
}

/// Positive and negative sets of row `i` by fully sorting the row.
/// Percentages are whole numbers so the counts are exact integers.
pub fn selection_oracle(row: &[f64], i: usize, pos: usize, neg: usize) -> (Vec<usize>, Vec<usize>) {
    let others = row.len() - 1;
    let n_pos = (pos * others).div_ceil(100);
    let n_neg = (neg * others).div_ceil(100).min(others - n_pos);
    let mut sorted: Vec<(f64, usize)> = row.iter().copied().zip(0..).filter(|&(_, j)| j != i).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let positives: Vec<usize> = sorted[..n_pos].iter().map(|p| p.1).collect();
    let mut rest = sorted[n_pos..].to_vec();
    rest.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    (positives, rest[..n_neg].iter().map(|p| p.1).collect())
}

/// Small random labeled dataset with a random mask (every row keeps a view).
pub fn small_dataset(rng: &mut ChaCha8Rng, n: usize, dims: &[usize], masked: bool) -> MultiViewDataset {
    let v = dims.len();
    let views = dims.iter().map(|&d| uniform(rng, n, d)).collect();
    let mut bits = vec![true; n * v];
    if masked {
        for i in 0..n {
            let keep = rng.random_range(0..v);
            for k in 0..v {
                if k != keep && rng.random_bool(0.3) {
                    bits[i * v + k] = false;
                }
            }
        }
    }
    let mask = IndicatorMatrix::new(n, v, bits).unwrap();
    let labels = (0..n).map(|i| i % 2).collect();
    MultiViewDataset::new(views, Some(labels), Some(mask), 2).unwrap()
}

pub fn tiny_model(dims: &[usize], seed: u64) -> GlcModel {
    let cfg = ModelConfig {
        hidden: vec![6],
        latent_dim: 4,
        head_dim: 3,
    };
    init_model(dims, &cfg, seed).unwrap()
}

pub fn with_params(model: &GlcModel, params: &[DenseMatrix]) -> GlcModel {
    let mut m = model.clone();
    for (dst, src) in m.params_mut().into_iter().zip(params) {
        *dst = src.clone();
    }
    m
}

pub fn full_batch(ds: &MultiViewDataset) -> Batch {
    ds.batch(&(0..ds.n_samples()).collect::<Vec<_>>())
}
