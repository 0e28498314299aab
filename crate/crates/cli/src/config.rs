//! Experiment configuration.
//!
//! A config file is one flat JSON object. Experiment keys:
//!
//! ```text
//! dataset     directory path, or "synthetic:n=300,k=3,v=3,dims=20,separation=1,seed=0"
//! settings    list of "clean" | "incomplete" | "noise" | "combined"
//! rates       list of rates in [0, 1]
//! noise_std   std of injected noise (0.4)
//! ablation    "rec" | "rec+ggc" | "full"
//! out         output directory
//! ```
//!
//! Every other key is a training key (`alpha`, `beta`, `tau`, `pos`, `neg`,
//! `batch_size`, `epochs`, `seed`, `profile`, ...). Values resolve in order:
//! profile defaults, then the file, then command-line flags.

use std::path::{Path, PathBuf};

use glc_core::data::{load_dataset, MultiViewDataset, Setting, SyntheticSpec};
use glc_core::error::{GlcError, Result};
use glc_core::model::Profile;
use glc_core::pipeline::{Ablation, TrainConfig};
use glc_core::rng::derive_seed;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const PAPER_RATES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Train,
    Sweep,
    Ablate,
}

impl Command {
    fn default_settings(self) -> Vec<Setting> {
        match self {
            Command::Prepare | Command::Train => vec![Setting::Clean],
            Command::Sweep | Command::Ablate => vec![Setting::Incomplete, Setting::Noise, Setting::Combined],
        }
    }

    fn default_rates(self) -> Vec<f64> {
        match self {
            Command::Prepare | Command::Train => vec![0.0],
            Command::Sweep => PAPER_RATES.to_vec(),
            Command::Ablate => vec![0.5],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Ablate => "ablate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub settings: Vec<Setting>,
    pub rates: Vec<f64>,
    pub noise_std: f64,
    pub ablation: Ablation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

fn config_error(msg: impl std::fmt::Display) -> GlcError {
    GlcError::Config(msg.to_string())
}

fn take<T: serde::de::DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> Result<T> {
    let value = map
        .remove(key)
        .ok_or_else(|| config_error(format!("missing key '{key}'")))?;
    serde_json::from_value(value).map_err(|e| config_error(format!("key '{key}': {e}")))
}

impl ExperimentConfig {
    /// Build from a fully merged flat map.
    pub fn from_map(mut map: Map<String, Value>) -> Result<Self> {
        let out: Option<PathBuf> = match map.remove("out") {
            None | Some(Value::Null) => None,
            Some(v) => Some(serde_json::from_value(v).map_err(|e| config_error(format!("key 'out': {e}")))?),
        };
        let cfg = Self {
            dataset: take(&mut map, "dataset")?,
            settings: take(&mut map, "settings")?,
            rates: take(&mut map, "rates")?,
            noise_std: take(&mut map, "noise_std")?,
            ablation: take(&mut map, "ablation")?,
            out,
            train: serde_json::from_value(Value::Object(map)).map_err(config_error)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() || self.rates.is_empty() {
            return Err(config_error("settings and rates must be nonempty"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(config_error(format!("rate {r} outside [0, 1]")));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(config_error(format!(
                "noise_std must be finite and >= 0, got {}",
                self.noise_std
            )));
        }
        self.train.validate()
    }

    /// The single (setting, rate) pair of a prepare or train run.
    pub fn single_cell(&self, command: &str) -> Result<(Setting, f64)> {
        match (self.settings.as_slice(), self.rates.as_slice()) {
            ([s], [r]) => Ok((*s, *r)),
            _ => Err(config_error(format!(
                "{command} takes exactly one setting and one rate"
            ))),
        }
    }

    /// Config of one sweep or ablation cell.
    pub fn cell(&self, setting: Setting, rate: f64, ablation: Ablation) -> Self {
        Self {
            settings: vec![setting],
            rates: vec![rate],
            ablation,
            out: None,
            train: ablation.apply(&self.train),
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn out_dir(&self, command: Command) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(command.name()))
    }
}

/// Seed of the run for `(setting, rate)`: `derive_seed(seed, "<setting>|<rate>")`
/// with the rate in shortest round-trip form (`0.1`, `1`). Cells are keyed by
/// their own coordinates, so adding rates or settings leaves others unchanged.
pub fn run_seed(seed: u64, setting: Setting, rate: f64) -> u64 {
    derive_seed(seed, &format!("{setting}|{rate}"))
}

/// Merge defaults, file and flag overrides, then validate.
pub fn resolve(command: Command, file: Option<&Path>, flags: Map<String, Value>) -> Result<ExperimentConfig> {
    let file_map = match file {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| GlcError::io(path, e))?;
            match serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))? {
                Value::Object(m) => m,
                _ => return Err(config_error(format!("{}: expected a JSON object", path.display()))),
            }
        }
    };
    let profile: Profile = match flags.get("profile").or_else(|| file_map.get("profile")) {
        None => Profile::Paper,
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| config_error(format!("key 'profile': {e}")))?,
    };
    let mut map = match serde_json::to_value(TrainConfig::for_profile(profile)).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("TrainConfig serializes to an object"),
    };
    let defaults = serde_json::json!({
        "dataset": "synthetic:",
        "settings": command.default_settings(),
        "rates": command.default_rates(),
        "noise_std": 0.4,
        "ablation": Ablation::Full,
    });
    for (k, v) in defaults
        .as_object()
        .expect("object")
        .iter()
        .chain(&file_map)
        .chain(&flags)
    {
        map.insert(k.clone(), v.clone());
    }
    ExperimentConfig::from_map(map)
}

/// Dataset named by a path or a `synthetic:` spec.
pub fn load_source(source: &str) -> Result<MultiViewDataset> {
    match source.strip_prefix("synthetic:") {
        Some(spec) => parse_synthetic(spec)?.generate(),
        None => load_dataset(source),
    }
}

/// Parse `key=value` pairs of a synthetic spec. Keys: `n` (300), `k` (3),
/// `v` (3), `dims` (20, or a `/`-separated list overriding `v`),
/// `separation` (1.0), `view_noise` (1.0), `seed` (0).
pub fn parse_synthetic(spec: &str) -> Result<SyntheticSpec> {
    let mut out = SyntheticSpec::new(300, 3, vec![20; 3], 1.0, 0);
    let mut views = None;
    let mut dims: Option<Vec<usize>> = None;
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| config_error(format!("synthetic spec: expected key=value, got '{part}'")))?;
        let bad = || config_error(format!("synthetic spec: bad value for '{key}': '{value}'"));
        match key {
            "n" => out.n_samples = value.parse().map_err(|_| bad())?,
            "k" => out.n_clusters = value.parse().map_err(|_| bad())?,
            "v" => views = Some(value.parse::<usize>().map_err(|_| bad())?),
            "dims" => {
                dims = Some(
                    value
                        .split('/')
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?,
                )
            }
            "separation" => out.separation = value.parse().map_err(|_| bad())?,
            "view_noise" => out.view_noise = value.parse().map_err(|_| bad())?,
            "seed" => out.seed = value.parse().map_err(|_| bad())?,
            other => return Err(config_error(format!("synthetic spec: unknown key '{other}'"))),
        }
    }
    out.dims = match (dims, views) {
        (Some(d), Some(v)) if d.len() == 1 => vec![d[0]; v],
        (Some(d), Some(v)) if d.len() != v => {
            return Err(config_error(format!("synthetic spec: {} dims for {v} views", d.len())))
        }
        (Some(d), _) => d,
        (None, v) => vec![20; v.unwrap_or(3)],
    };
    Ok(out)
}
