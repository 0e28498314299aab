//! Multi-view datasets, availability masks, corruption protocols and
//! mini-batching.

mod corrupt;
mod io;
mod synthetic;

pub use corrupt::{apply_combined, generate_missing_mask, inject_noise, Setting};
pub use io::{load_dataset, save_dataset, Manifest, MANIFEST_FILE};
pub use synthetic::{make_synthetic, SyntheticSpec};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, GlcError, Result};
use crate::nn::DenseMatrix;

/// Dense `N x V` boolean matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagMatrix {
    n_samples: usize,
    n_views: usize,
    bits: Vec<bool>,
}

impl FlagMatrix {
    pub fn new(n_samples: usize, n_views: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n_samples * n_views {
            return Err(shape_err!("{} flags for a {n_samples}x{n_views} matrix", bits.len()));
        }
        Ok(Self {
            n_samples,
            n_views,
            bits,
        })
    }

    pub fn filled(n_samples: usize, n_views: usize, value: bool) -> Self {
        Self {
            n_samples,
            n_views,
            bits: vec![value; n_samples * n_views],
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    #[inline]
    pub fn get(&self, sample: usize, view: usize) -> bool {
        self.bits[sample * self.n_views + view]
    }

    pub fn set(&mut self, sample: usize, view: usize, value: bool) {
        self.bits[sample * self.n_views + view] = value;
    }

    pub fn row(&self, sample: usize) -> &[bool] {
        &self.bits[sample * self.n_views..(sample + 1) * self.n_views]
    }

    pub fn count_row(&self, sample: usize) -> usize {
        self.row(sample).iter().filter(|&&b| b).count()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Availability mask `M`: `M[i][v] = 1` iff view `v` of sample `i` is
/// observed. Every sample is observed in at least one view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FlagMatrix", into = "FlagMatrix")]
pub struct IndicatorMatrix(FlagMatrix);

impl TryFrom<FlagMatrix> for IndicatorMatrix {
    type Error = GlcError;

    fn try_from(flags: FlagMatrix) -> Result<Self> {
        if let Some(i) = (0..flags.n_samples).find(|&i| flags.count_row(i) == 0) {
            return Err(GlcError::Invariant(format!("sample {i} has no available view")));
        }
        Ok(Self(flags))
    }
}

impl From<IndicatorMatrix> for FlagMatrix {
    fn from(m: IndicatorMatrix) -> Self {
        m.0
    }
}

impl IndicatorMatrix {
    pub fn new(n_samples: usize, n_views: usize, bits: Vec<bool>) -> Result<Self> {
        FlagMatrix::new(n_samples, n_views, bits)?.try_into()
    }

    pub fn all_ones(n_samples: usize, n_views: usize) -> Self {
        Self(FlagMatrix::filled(n_samples, n_views, true))
    }

    pub fn flags(&self) -> &FlagMatrix {
        &self.0
    }

    pub fn n_samples(&self) -> usize {
        self.0.n_samples
    }

    pub fn n_views(&self) -> usize {
        self.0.n_views
    }

    #[inline]
    pub fn available(&self, sample: usize, view: usize) -> bool {
        self.0.get(sample, view)
    }

    pub fn row(&self, sample: usize) -> &[bool] {
        self.0.row(sample)
    }

    pub fn views_available(&self, sample: usize) -> usize {
        self.0.count_row(sample)
    }

    pub fn is_complete(&self) -> bool {
        self.0.bits.iter().all(|&b| b)
    }

    /// Samples missing at least one view.
    pub fn incomplete_rows(&self) -> usize {
        (0..self.n_samples())
            .filter(|&i| self.views_available(i) < self.n_views())
            .count()
    }

    /// Sample indices observed in `view`.
    pub fn available_in(&self, view: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.available(i, view)).collect()
    }
}

/// `V` aligned views over `N` samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewDataset {
    pub views: Vec<DenseMatrix>,
    pub labels: Option<Vec<usize>>,
    pub mask: IndicatorMatrix,
    /// Ground-truth record of which entries received noise. Never read by
    /// the model.
    pub noise_flags: Option<FlagMatrix>,
    pub n_clusters: usize,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<DenseMatrix>,
        labels: Option<Vec<usize>>,
        mask: Option<IndicatorMatrix>,
        n_clusters: usize,
    ) -> Result<Self> {
        let n = views.first().map(DenseMatrix::rows).unwrap_or(0);
        let mask = mask.unwrap_or_else(|| IndicatorMatrix::all_ones(n, views.len()));
        let ds = Self {
            views,
            labels,
            mask,
            noise_flags: None,
            n_clusters,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(GlcError::Format("dataset has no views".into()));
        }
        let n = self.n_samples();
        for (v, x) in self.views.iter().enumerate() {
            if x.rows() != n {
                return Err(GlcError::Format(format!(
                    "view {v} has {} rows, view 0 has {n}",
                    x.rows()
                )));
            }
            if x.cols() == 0 {
                return Err(GlcError::Format(format!("view {v} has no features")));
            }
            if !x.is_finite() {
                return Err(GlcError::Format(format!("view {v} has non-finite entries")));
            }
        }
        if self.mask.n_samples() != n || self.mask.n_views() != self.n_views() {
            return Err(GlcError::Format(format!(
                "mask is {}x{}, expected {n}x{}",
                self.mask.n_samples(),
                self.mask.n_views(),
                self.n_views()
            )));
        }
        if let Some(f) = &self.noise_flags {
            if f.n_samples() != n || f.n_views() != self.n_views() {
                return Err(GlcError::Format("noise flags do not match dataset shape".into()));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(GlcError::Format(format!("{} labels for {n} samples", labels.len())));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= self.n_clusters) {
                return Err(GlcError::Invariant(format!(
                    "label {bad} not below K = {}",
                    self.n_clusters
                )));
            }
            let mut seen = labels.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() < 2 {
                return Err(GlcError::Invariant("labels cover fewer than 2 classes".into()));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.views.iter().map(DenseMatrix::cols).collect()
    }

    /// Z-score every feature of every view using statistics of the available
    /// rows only. Constant features are centred but not rescaled.
    pub fn standardize(&mut self) {
        for (v, x) in self.views.iter_mut().enumerate() {
            let rows = self.mask.available_in(v);
            if rows.is_empty() {
                continue;
            }
            let count = rows.len() as f64;
            for c in 0..x.cols() {
                let mean = rows.iter().map(|&r| x.get(r, c)).sum::<f64>() / count;
                let var = rows.iter().map(|&r| (x.get(r, c) - mean).powi(2)).sum::<f64>() / count;
                let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
                for r in 0..x.rows() {
                    x.set(r, c, (x.get(r, c) - mean) / sd);
                }
            }
        }
    }

    /// Restrict the dataset to the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let views = self
            .views
            .iter()
            .enumerate()
            .map(|(v, x)| {
                let (positions, rows): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .enumerate()
                    .filter(|&(_, &i)| self.mask.available(i, v))
                    .map(|(p, &i)| (p, i))
                    .unzip();
                ViewBatch {
                    data: x.select_rows(&rows),
                    positions,
                }
            })
            .collect();
        Batch {
            indices: indices.to_vec(),
            views,
        }
    }
}

/// Rows of one view available inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    /// `n_v x D_v`
    pub data: DenseMatrix,
    /// Batch position of each row of `data`.
    pub positions: Vec<usize>,
}

/// A mini-batch restricted per view to available samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Dataset sample index of each batch position.
    pub indices: Vec<usize>,
    pub views: Vec<ViewBatch>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Per-view available counts.
    pub fn available_counts(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.positions.len()).collect()
    }
}

/// Uniform random batch without replacement; the whole dataset when
/// `N <= batch_size`.
pub fn sample_batch<R: Rng>(dataset: &MultiViewDataset, batch_size: usize, rng: &mut R) -> Result<Batch> {
    if batch_size < 2 {
        return Err(config_err!("batch size must be at least 2, got {batch_size}"));
    }
    let n = dataset.n_samples();
    let mut indices = if n <= batch_size {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, batch_size).into_vec()
    };
    indices.sort_unstable();
    Ok(dataset.batch(&indices))
}

/// One epoch's batches: a seeded shuffle of `0..n` cut into chunks.
pub fn epoch_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(config_err!("batch size must be at least 2, got {batch_size}"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
