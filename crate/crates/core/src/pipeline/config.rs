use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::graph::SigmaMode;
use crate::model::{FeatureSpace, ModelConfig, Profile};

/// Everything that controls one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the global-graph term.
    pub alpha: f64,
    /// Weight of the local-graph term.
    pub beta: f64,
    pub tau: f64,
    /// Percent of each graph row mined as positives.
    pub pos: f64,
    /// Percent of each graph row mined as negatives.
    pub neg: f64,
    pub sigma: SigmaMode,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub seed: u64,
    pub profile: Profile,
    /// Overrides the profile's network sizes when set.
    pub model: Option<ModelConfig>,
    pub include_positive_in_denominator: bool,
    pub normalize_local_weights: bool,
    /// Cluster the training data every `eval_every` training epochs (and at
    /// the last one); 0 disables intermediate evaluation.
    pub eval_every: usize,
    pub eval_runs: usize,
    pub kmeans_restarts: usize,
    pub feature_space: FeatureSpace,
    /// Retrain the network for each evaluation run instead of only
    /// re-seeding k-means on frozen features.
    pub retrain_per_seed: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0,
            tau: 0.5,
            pos: 1.0,
            neg: 50.0,
            sigma: SigmaMode::Median,
            learning_rate: 1e-3,
            batch_size: 256,
            pretrain_epochs: 200,
            epochs: 200,
            seed: 0,
            profile: Profile::Paper,
            model: None,
            include_positive_in_denominator: false,
            normalize_local_weights: false,
            eval_every: 10,
            eval_runs: 5,
            kmeans_restarts: 10,
            feature_space: FeatureSpace::Contrastive,
            retrain_per_seed: false,
        }
    }

    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            pretrain_epochs: 50,
            epochs: 100,
            ..Self::paper()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.clone().unwrap_or_else(|| self.profile.model_config())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(config_err!("alpha and beta must be >= 0"));
        }
        if !(self.tau > 0.0) {
            return Err(config_err!("tau must be > 0, got {}", self.tau));
        }
        if !(self.pos > 0.0) || !(self.neg > 0.0) || self.pos + self.neg > 100.0 {
            return Err(config_err!(
                "need 0 < pos, 0 < neg, pos + neg <= 100; got {} and {}",
                self.pos,
                self.neg
            ));
        }
        if let SigmaMode::Fixed(s) = self.sigma {
            if !(s > 0.0) {
                return Err(config_err!("fixed sigma must be > 0, got {s}"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(config_err!("learning rate must be > 0"));
        }
        if self.batch_size < 2 {
            return Err(config_err!("batch size must be >= 2"));
        }
        if self.epochs < 1 {
            return Err(config_err!("epochs must be >= 1"));
        }
        if self.eval_runs < 1 || self.kmeans_restarts < 1 {
            return Err(config_err!("eval_runs and kmeans_restarts must be >= 1"));
        }
        Ok(())
    }
}

/// Which loss terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "rec")]
    Rec,
    #[serde(rename = "rec+ggc")]
    RecGgc,
    #[serde(rename = "full")]
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 3] = [Ablation::Rec, Ablation::RecGgc, Ablation::Full];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Rec => "rec",
            Ablation::RecGgc => "rec+ggc",
            Ablation::Full => "full",
        }
    }

    /// `(α, β)` for this row given the full-model weights.
    pub fn weights(self, alpha: f64, beta: f64) -> (f64, f64) {
        match self {
            Ablation::Rec => (0.0, 0.0),
            Ablation::RecGgc => (alpha, 0.0),
            Ablation::Full => (alpha, beta),
        }
    }

    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        let (alpha, beta) = self.weights(config.alpha, config.beta);
        TrainConfig {
            alpha,
            beta,
            ..config.clone()
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = crate::error::GlcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rec" => Ok(Ablation::Rec),
            "rec+ggc" => Ok(Ablation::RecGgc),
            "full" => Ok(Ablation::Full),
            other => Err(config_err!("unknown ablation '{other}'")),
        }
    }
}
