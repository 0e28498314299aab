use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{config_err, Result};
use crate::nn::DenseMatrix;
use crate::rng::{stream, Stream};

/// Gaussian-mixture multi-view generator.
///
/// Samples draw a shared latent vector `μ_label + N(0, I)` with
/// `μ_k ~ separation · N(0, I)`. View `v` observes `A_v · latent + e` where
/// `A_v` is a random `D_v x latent_dim` map and `e ~ N(0, view_noise²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_clusters: usize,
    pub dims: Vec<usize>,
    pub separation: f64,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_view_noise")]
    pub view_noise: f64,
    #[serde(default = "default_true")]
    pub standardize: bool,
    pub seed: u64,
}

fn default_latent_dim() -> usize {
    8
}

fn default_view_noise() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(n_samples: usize, n_clusters: usize, dims: Vec<usize>, separation: f64, seed: u64) -> Self {
        Self {
            n_samples,
            n_clusters,
            dims,
            separation,
            latent_dim: default_latent_dim(),
            view_noise: default_view_noise(),
            standardize: true,
            seed,
        }
    }

    pub fn generate(&self) -> Result<MultiViewDataset> {
        let (n, k) = (self.n_samples, self.n_clusters);
        if k < 2 {
            return Err(config_err!("synthetic data needs K >= 2, got {k}"));
        }
        if n == 0 || n % k != 0 {
            return Err(config_err!("N = {n} must be a positive multiple of K = {k}"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) || self.latent_dim == 0 {
            return Err(config_err!("invalid synthetic dims {:?}", self.dims));
        }
        if !(self.separation >= 0.0) || !(self.view_noise >= 0.0) {
            return Err(config_err!("separation and view noise must be non-negative"));
        }
        let l = self.latent_dim;
        let mut rng = stream(self.seed, Stream::Synthetic);
        let gauss = |rng: &mut crate::rng::GlcRng| -> f64 { rng.sample(StandardNormal) };

        let means: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..l).map(|_| self.separation * gauss(&mut rng)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let latent: Vec<Vec<f64>> = labels
            .iter()
            .map(|&c| means[c].iter().map(|m| m + gauss(&mut rng)).collect())
            .collect();

        let scale = 1.0 / (l as f64).sqrt();
        let mut views = Vec::with_capacity(self.dims.len());
        for &d in &self.dims {
            let map: Vec<f64> = (0..d * l).map(|_| scale * gauss(&mut rng)).collect();
            let mut x = DenseMatrix::zeros(n, d);
            for (i, z) in latent.iter().enumerate() {
                for j in 0..d {
                    let signal: f64 = map[j * l..(j + 1) * l].iter().zip(z).map(|(a, b)| a * b).sum();
                    x.set(i, j, signal + self.view_noise * gauss(&mut rng));
                }
            }
            views.push(x);
        }
        let mut ds = MultiViewDataset::new(views, Some(labels), None, k)?;
        if self.standardize {
            ds.standardize();
        }
        Ok(ds)
    }
}

/// `K` balanced Gaussian clusters observed through `dims.len()` views.
pub fn make_synthetic(
    n_samples: usize,
    n_clusters: usize,
    dims: &[usize],
    separation: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    SyntheticSpec::new(n_samples, n_clusters, dims.to_vec(), separation, seed).generate()
}
