use serde::{Deserialize, Serialize};
use serde_json::json;

use super::anchor::AnchorIndex;
use super::conditions::{pretrain_conditions, ConditionConfig, ConditionProvider};
use super::denoiser::{train_diffusion, Denoiser, DenoiserConfig};
use super::sampler::reverse_denoise_batch;
use super::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::checkpoint::Checkpoint;
use crate::dataset::{InteractionSet, ScenarioSplit};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseMatrix, Layer, MlpParams, Rng};
use crate::prior::{PriorReps, View};

pub const STAGE2_TAG: &str = "stage2";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub t_prime: usize,
    pub top_n: usize,
    pub denoiser: DenoiserConfig,
    pub conditions: ConditionConfig,
    pub seed: u64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            schedule: ScheduleKind::Linear,
            steps: 500,
            t_prime: 20,
            top_n: 5,
            denoiser: DenoiserConfig::default(),
            conditions: ConditionConfig::default(),
            seed: 7,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 || self.t_prime == 0 || self.t_prime > self.steps {
            return Err(Error::Param(format!(
                "need 2 <= T and 1 <= T' <= T, got T={} T'={}",
                self.steps, self.t_prime
            )));
        }
        if self.top_n == 0 {
            return Err(Error::Param("top_n must be at least 1".into()));
        }
        Ok(())
    }
}

/// One view's diffusion expert with its generated representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewDiffusion {
    pub view: View,
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
    /// Condition per entity of the view (bundles for Bint, items for Iint).
    pub cond: DenseMatrix,
    /// Diffusion representation per entity of the view.
    pub generated: DenseMatrix,
    pub epoch_loss: Vec<f64>,
}

/// Generates a diffusion representation for every entity of a view from
/// its composition-based anchor and its condition. Only bundle-item
/// affiliations, warm embedded representations and the denoiser are read.
#[allow(clippy::too_many_arguments)]
pub fn generate_all(
    view: View,
    z: &InteractionSet,
    warm: &[usize],
    embedded: &DenseMatrix,
    cond: &DenseMatrix,
    den: &Denoiser,
    s: &NoiseSchedule,
    t_prime: usize,
    top_n: usize,
) -> Result<DenseMatrix> {
    let (index, comps) = match view {
        View::Bint => (AnchorIndex::for_bundles(z, warm, embedded)?, z.row_adjacency()),
        View::Iint => (AnchorIndex::for_items(z, warm, embedded)?, z.col_adjacency()),
    };
    let n = comps.len();
    if cond.rows() != n || embedded.rows() != n {
        return Err(Error::shape("generate_all entities", n, format!("{} / {}", cond.rows(), embedded.rows())));
    }
    let mut starts = DenseMatrix::zeros(n, embedded.cols());
    for e in 0..n {
        starts.row_mut(e).copy_from_slice(&index.anchor(e, &comps[e], top_n)?);
    }
    reverse_denoise_batch(&starts, cond, den, s, t_prime)
}

fn train_view(
    view: View,
    split: &ScenarioSplit,
    embedded: &DenseMatrix,
    cond: &DenseMatrix,
    warm: &[usize],
    cfg: &Stage2Config,
    rng: &mut Rng,
) -> Result<ViewDiffusion> {
    let schedule = make_schedule(cfg.schedule, cfg.steps)?;
    let fit = train_diffusion(
        view,
        &embedded.select_rows(warm),
        &cond.select_rows(warm),
        &schedule,
        &cfg.denoiser,
        rng,
    )?;
    let generated = generate_all(
        view,
        &split.z,
        warm,
        embedded,
        cond,
        &fit.denoiser,
        &schedule,
        cfg.t_prime,
        cfg.top_n,
    )?;
    log::info!(
        "stage2 {}: {} warm, final loss {:.5}",
        view.as_str(),
        warm.len(),
        fit.epoch_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(ViewDiffusion {
        view,
        denoiser: fit.denoiser,
        schedule,
        cond: cond.clone(),
        generated,
        epoch_loss: fit.epoch_loss,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    pub conditions: ConditionProvider,
    pub bint: ViewDiffusion,
    pub iint: ViewDiffusion,
}

/// Pretrains composition conditions, then fits and samples one diffusion
/// expert per view from the Stage-1 embedded representations.
pub fn train_stage2(split: &ScenarioSplit, prior: &PriorReps, cfg: &Stage2Config) -> Result<Stage2Output> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let conditions = pretrain_conditions(&split.z, &cfg.conditions, &mut root.fork(1))?;
    let bint = train_view(
        View::Bint,
        split,
        &prior.bint.entity_rep,
        &conditions.bundle_cond,
        &split.bint_warm_bundles(),
        cfg,
        &mut root.fork(2),
    )?;
    let iint = train_view(
        View::Iint,
        split,
        &prior.iint.entity_rep,
        &conditions.item_cond,
        &split.warm_items(),
        cfg,
        &mut root.fork(3),
    )?;
    Ok(Stage2Output { conditions, bint, iint })
}

impl ViewDiffusion {
    pub fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new(STAGE2_TAG, config).with_meta(json!({
            "view": self.view,
            "schedule": self.schedule.descriptor(),
            "cond_dim": self.denoiser.cond_dim,
            "time_dim": self.denoiser.time_dim,
            "layers": self.denoiser.net.layers().len(),
            "epoch_loss": self.epoch_loss,
        }));
        for (i, l) in self.denoiser.net.layers().iter().enumerate() {
            ck.push(format!("denoiser.layer{i}.weight"), l.weight.clone());
            ck.push_vec(format!("denoiser.layer{i}.bias"), &l.bias);
        }
        ck.push("cond", self.cond.clone());
        ck.push("generated", self.generated.clone());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.stage != STAGE2_TAG {
            return Err(Error::Checkpoint(format!("expected stage {STAGE2_TAG}, found {}", ck.stage)));
        }
        let bad = |what: &str| Error::Checkpoint(format!("stage-2 meta field `{what}` missing or malformed"));
        let view: View = serde_json::from_value(ck.meta["view"].clone()).map_err(|_| bad("view"))?;
        let kind: ScheduleKind = serde_json::from_value(ck.meta["schedule"]["kind"].clone()).map_err(|_| bad("schedule.kind"))?;
        let steps = ck.meta["schedule"]["steps"].as_u64().ok_or_else(|| bad("schedule.steps"))? as usize;
        let cond_dim = ck.meta["cond_dim"].as_u64().ok_or_else(|| bad("cond_dim"))? as usize;
        let time_dim = ck.meta["time_dim"].as_u64().ok_or_else(|| bad("time_dim"))? as usize;
        let n_layers = ck.meta["layers"].as_u64().ok_or_else(|| bad("layers"))? as usize;
        let epoch_loss: Vec<f64> = serde_json::from_value(ck.meta["epoch_loss"].clone()).map_err(|_| bad("epoch_loss"))?;
        let layers = (0..n_layers)
            .map(|i| {
                Ok(Layer {
                    weight: ck.get(&format!("denoiser.layer{i}.weight"))?.clone(),
                    bias: ck.get(&format!("denoiser.layer{i}.bias"))?.as_slice().to_vec(),
                    activation: if i + 1 == n_layers { Activation::Identity } else { Activation::SiLU },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let denoiser = Denoiser::from_net(view, MlpParams::new(layers)?, cond_dim, time_dim, steps)?;
        Ok(Self {
            view,
            denoiser,
            schedule: make_schedule(kind, steps)?,
            cond: ck.get("cond")?.clone(),
            generated: ck.get("generated")?.clone(),
            epoch_loss,
        })
    }
}
