//! All-unrated-item top-K evaluation and representation projections.

mod metrics;
mod projection;
mod report;

pub use metrics::{ndcg_at_k, rank_order, recall_at_k, top_k};
pub use projection::{project_2d, Projection};
pub use report::{evaluate, rank_user, MetricReport, SituationHits, SubsetMetrics};
