//! Training loop, fusion, clustering and evaluation.

pub mod config;
pub mod evaluate;
pub mod fuse;
pub mod kmeans;
pub mod metrics;
pub mod train;

pub use config::{Ablation, TrainConfig};
pub use evaluate::{
    cluster_features, eval_seeds, evaluate, fused_features, run_experiment, ClusterReport, ExperimentResult, RunReport,
};
pub use fuse::fuse_mean;
pub use kmeans::{kmeans, KMeansResult};
pub use metrics::{accuracy, ari, metrics, nmi, Contingency, Metrics};
pub use train::{
    batch_objective, batch_objective_frozen, pretrain, total_loss, train, BatchLosses, BatchObjective, EpochRecord,
    Phase, Selection, TrainHistory, Trainer,
};
