//! Per-view conditional diffusion experts that generate representations
//! for any bundle or item from its composition alone.

mod anchor;
mod conditions;
mod denoiser;
mod expert;
mod sampler;
mod schedule;

pub use anchor::AnchorIndex;
pub use conditions::{pretrain_conditions, ConditionConfig, ConditionProvider};
pub use denoiser::{time_embedding, train_diffusion, Denoiser, DenoiserConfig, DenoiserFit};
pub use expert::{generate_all, train_stage2, Stage2Config, Stage2Output, ViewDiffusion, STAGE2_TAG};
pub use sampler::{reverse_denoise, reverse_denoise_batch, strided_steps};
pub use schedule::{forward_noise, implied_noise, make_schedule, NoiseSchedule, ScheduleKind};
