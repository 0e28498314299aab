//! Graph-guided contrastive objectives.
//!
//! The global term builds a cosine graph over every available feature in a
//! batch and mines positives and negatives from it. The local term weights
//! each cross-view positive pair by a propagated Gaussian affinity.

mod global;
mod local;

pub use global::{
    build_global_graph, ggc_loss, ggc_spec, select_pairs, selection_count, GlobalAffinityGraph, PairSets,
};
pub use local::{
    co_available, cross_view_spec, high_order_diagonal, high_order_graph, local_affinity, log_weights, lwc_loss,
    lwc_total, median_sigma, pair_weights, pairwise_contrastive_loss, HighOrderLocalGraph, LocalOptions, PairWeights,
    SigmaMode, ViewEmbedding,
};
