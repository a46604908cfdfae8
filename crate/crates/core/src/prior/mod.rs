//! Prior-embedding experts: dual-view graph propagation over the training
//! interactions, item-to-bundle aggregation and BPR training.

mod graph;
mod model;
mod train;

pub use graph::{
    aggregate_items, aggregate_items_adjoint, normalize_adjacency, propagate, propagate_tables, BipartiteGraph,
    View, ViewEmbeddings,
};
pub use model::{softplus, PriorGrads, PriorModel, PriorParams, PriorReps};
pub use train::{params_from_checkpoint, sample_triples, train_stage1, Stage1Config, Stage1Output, STAGE1_TAG};
