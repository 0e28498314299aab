use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FlagMatrix, IndicatorMatrix, MultiViewDataset};
use crate::error::{config_err, Result};
use crate::rng::{stream, GlcRng, Stream};

/// Experimental corruption setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Clean,
    Incomplete,
    Noise,
    Combined,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Clean => "clean",
            Setting::Incomplete => "incomplete",
            Setting::Noise => "noise",
            Setting::Combined => "combined",
        }
    }

    /// Apply this setting's protocol.
    pub fn apply(self, dataset: &MultiViewDataset, rate: f64, noise_std: f64, seed: u64) -> Result<MultiViewDataset> {
        match self {
            Setting::Clean => Ok(dataset.clone()),
            Setting::Incomplete => {
                let mut out = dataset.clone();
                out.mask = fresh_mask(dataset, rate, seed)?;
                Ok(out)
            }
            Setting::Noise => inject_noise(dataset, rate, noise_std, seed),
            Setting::Combined => apply_combined(dataset, rate, noise_std, seed),
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = crate::error::GlcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clean" => Ok(Setting::Clean),
            "incomplete" | "i" => Ok(Setting::Incomplete),
            "noise" | "n" => Ok(Setting::Noise),
            "combined" | "i+n" => Ok(Setting::Combined),
            other => Err(config_err!("unknown setting '{other}'")),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(config_err!("rate must lie in [0, 1], got {rate}"));
    }
    Ok(())
}

/// Pick exactly `round(rate·n)` rows and, for each, a uniformly random
/// nonempty proper subset of the `v` views (as a bitmask). Rows are returned
/// in ascending order.
fn perturbed_subsets(n: usize, v: usize, rate: f64, rng: &mut GlcRng) -> Result<Vec<(usize, u64)>> {
    check_rate(rate)?;
    let count = (rate * n as f64).round() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }
    if v < 2 {
        return Err(config_err!("perturbing views needs at least 2 views, got {v}"));
    }
    if v >= 64 {
        return Err(config_err!("at most 63 views are supported, got {v}"));
    }
    let mut rows = rand::seq::index::sample(rng, n, count).into_vec();
    rows.sort_unstable();
    // nonempty proper subsets are the bitmasks 1 ..= 2^v - 2
    let upper = (1u64 << v) - 1;
    Ok(rows.into_iter().map(|r| (r, rng.random_range(1..upper))).collect())
}

/// Availability mask with exactly `round(rate·n)` incomplete rows. Each
/// incomplete row loses a uniformly drawn nonempty proper subset of views.
pub fn generate_missing_mask(n: usize, v: usize, rate: f64, seed: u64) -> Result<IndicatorMatrix> {
    let mut rng = stream(seed, Stream::MissingMask);
    let mut flags = FlagMatrix::filled(n, v, true);
    for (row, removed) in perturbed_subsets(n, v, rate, &mut rng)? {
        for view in 0..v {
            if removed >> view & 1 == 1 {
                flags.set(row, view, false);
            }
        }
    }
    flags.try_into()
}

fn fresh_mask(dataset: &MultiViewDataset, rate: f64, seed: u64) -> Result<IndicatorMatrix> {
    if !dataset.mask.is_complete() {
        return Err(config_err!(
            "dataset is already incomplete; missing-view protocols start from complete data"
        ));
    }
    generate_missing_mask(dataset.n_samples(), dataset.n_views(), rate, seed)
}

/// Add `N(0, std²)` noise to a protocol-selected set of `(sample, view)`
/// entries. The selection uses the missing-view subset protocol, is recorded
/// in `noise_flags`, and leaves the availability mask untouched.
pub fn inject_noise(dataset: &MultiViewDataset, rate: f64, std: f64, seed: u64) -> Result<MultiViewDataset> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(config_err!("noise std must be positive, got {std}"));
    }
    let (n, v) = (dataset.n_samples(), dataset.n_views());
    let mut select_rng = stream(seed, Stream::NoiseSelection);
    let mut value_rng = stream(seed, Stream::NoiseValues);
    let normal = Normal::new(0.0, std).map_err(|e| config_err!("{e}"))?;

    let mut out = dataset.clone();
    let mut flags = FlagMatrix::filled(n, v, false);
    for (row, chosen) in perturbed_subsets(n, v, rate, &mut select_rng)? {
        for view in 0..v {
            if chosen >> view & 1 == 1 {
                flags.set(row, view, true);
                for x in out.views[view].row_mut(row) {
                    *x += normal.sample(&mut value_rng);
                }
            }
        }
    }
    out.noise_flags = Some(flags);
    Ok(out)
}

/// Noise first, then view removal, each at `rate` and from independent
/// streams of the same seed.
pub fn apply_combined(dataset: &MultiViewDataset, rate: f64, std: f64, seed: u64) -> Result<MultiViewDataset> {
    let mut out = inject_noise(dataset, rate, std, seed)?;
    out.mask = fresh_mask(dataset, rate, seed)?;
    Ok(out)
}
