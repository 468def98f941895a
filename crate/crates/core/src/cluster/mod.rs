//! Weighted k-means and incremental clustering over a growing anchor set.

mod incremental;
mod kmeans;

pub use incremental::{
    anchor_budget_guard, ic_commit, ic_plan, ic_step, Anchor, AnchorProposal, AnchorSet, AnchorWeight, IcConfig,
    IcOutcome, IcPlan,
};
pub use kmeans::{nearest, sq_dist, weighted_kmeans, ClusterResult, KMeans};
