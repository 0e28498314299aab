use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{GlcError, Result};
use crate::model::{encode_dataset, init_model, FeatureSpace, GlcModel};
use crate::nn::DenseMatrix;
use crate::pipeline::config::TrainConfig;
use crate::pipeline::fuse::fuse_mean;
use crate::pipeline::kmeans::kmeans;
use crate::pipeline::metrics::{metrics, Metrics};
use crate::pipeline::train::{TrainHistory, Trainer};
use crate::rng::derive_seed;

/// Fused `N x d` features of the whole dataset.
pub fn fused_features(model: &GlcModel, dataset: &MultiViewDataset, space: FeatureSpace) -> Result<DenseMatrix> {
    let per_view = encode_dataset(model, dataset, space)?;
    fuse_mean(&per_view, &dataset.mask)
}

pub fn cluster_features(
    features: &DenseMatrix,
    labels: &[usize],
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Metrics> {
    let r = kmeans(features, k, restarts, seed)?;
    metrics(&r.labels, labels)
}

/// Seeds of the evaluation runs derived from one base seed.
pub fn eval_seeds(base: u64, runs: usize) -> Vec<u64> {
    (0..runs).map(|r| derive_seed(base, &format!("eval|{r}"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Per-run metrics with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub n_clusters: usize,
    pub runs: Vec<RunReport>,
    pub mean: Metrics,
    pub std: Metrics,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ClusterReport {
    pub fn from_runs(n_clusters: usize, runs: Vec<RunReport>) -> Result<Self> {
        if runs.is_empty() {
            return Err(GlcError::Config("a report needs at least one run".into()));
        }
        let (acc, acc_sd) = mean_std(runs.iter().map(|r| r.acc));
        let (nmi, nmi_sd) = mean_std(runs.iter().map(|r| r.nmi));
        let (ari, ari_sd) = mean_std(runs.iter().map(|r| r.ari));
        Ok(Self {
            n_clusters,
            runs,
            mean: Metrics { acc, nmi, ari },
            std: Metrics {
                acc: acc_sd,
                nmi: nmi_sd,
                ari: ari_sd,
            },
        })
    }

    pub fn n_runs(&self) -> usize {
        self.runs.len()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.seed).collect()
    }
}

fn labels_of(dataset: &MultiViewDataset) -> Result<&[usize]> {
    dataset
        .labels
        .as_deref()
        .ok_or_else(|| GlcError::Usage("evaluation needs a labeled dataset".into()))
}

/// Fuse, then k-means and score once per seed on the same frozen features.
pub fn evaluate(
    model: &GlcModel,
    dataset: &MultiViewDataset,
    k: usize,
    seeds: &[u64],
    restarts: usize,
    space: FeatureSpace,
) -> Result<ClusterReport> {
    let labels = labels_of(dataset)?;
    let features = fused_features(model, dataset, space)?;
    let runs = seeds
        .iter()
        .map(|&seed| {
            let m = cluster_features(&features, labels, k, restarts, seed)?;
            Ok(RunReport {
                seed,
                acc: m.acc,
                nmi: m.nmi,
                ari: m.ari,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ClusterReport::from_runs(k, runs)
}

/// Output of a full pretrain, train and evaluate run.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: TrainConfig,
    pub model: GlcModel,
    pub history: TrainHistory,
    pub report: ClusterReport,
}

fn fit(dataset: &MultiViewDataset, config: &TrainConfig) -> Result<(GlcModel, TrainHistory)> {
    let model = init_model(&dataset.dims(), &config.model_config(), config.seed)?;
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.pretrain(dataset)?;
    trainer.train(dataset)?;
    Ok(trainer.into_parts())
}

/// Initialize, pretrain, train and evaluate. With `retrain_per_seed` each
/// evaluation run trains its own network; the returned model and history
/// are those of the first run.
pub fn run_experiment(dataset: &MultiViewDataset, config: &TrainConfig) -> Result<ExperimentResult> {
    config.validate()?;
    labels_of(dataset)?;
    let k = dataset.n_clusters;
    let seeds = eval_seeds(config.seed, config.eval_runs);
    if !config.retrain_per_seed {
        let (model, history) = fit(dataset, config)?;
        let report = evaluate(&model, dataset, k, &seeds, config.kmeans_restarts, config.feature_space)?;
        return Ok(ExperimentResult {
            config: config.clone(),
            model,
            history,
            report,
        });
    }
    let mut first = None;
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..config.clone() };
        let (model, history) = fit(dataset, &cfg)?;
        let r = evaluate(&model, dataset, k, &[seed], cfg.kmeans_restarts, cfg.feature_space)?;
        runs.extend(r.runs);
        first.get_or_insert((model, history));
    }
    let (model, history) = first.expect("eval_runs >= 1");
    Ok(ExperimentResult {
        config: config.clone(),
        model,
        history,
        report: ClusterReport::from_runs(k, runs)?,
    })
}
