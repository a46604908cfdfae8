//! Cold-aware hierarchical mixture of experts: per-entity view gates over
//! the embedded and diffusion experts, a shared output gate over views,
//! and gate training with pseudo cold bundles.

mod gates;
mod train;

pub use gates::{
    cold_aware_feature, fuse_entity, interpolate_pseudo, output_gate, predict, view_gate, FrozenExperts,
    FusedBundles, FusionMode, GateParams, PseudoBundle,
};
pub use train::{
    gate_loss_and_grad, gates_csv, gates_from_checkpoint, output_gates_csv, pseudo_count, sample_pseudo_triples,
    train_stage3, BundleRef, GateTriple, Stage3Config, Stage3Output, STAGE3_TAG,
};
