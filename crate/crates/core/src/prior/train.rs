use serde::{Deserialize, Serialize};
use serde_json::json;

use super::model::{PriorModel, PriorParams, PriorReps};
use crate::checkpoint::Checkpoint;
use crate::dataset::ScenarioSplit;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::nn::{AdamConfig, AdamState, DenseMatrix, Rng};

pub const STAGE1_TAG: &str = "stage1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub dim: usize,
    pub layers: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            dim: 64,
            layers: 2,
            epochs: 200,
            patience: 20,
            batch_size: 256,
            lr: 1e-2,
            weight_decay: 1e-4,
            init_std: 0.1,
            seed: 7,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.layers == 0 || self.batch_size == 0 {
            return Err(Error::Param("stage-1 dim, layers and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.init_std > 0.0) {
            return Err(Error::Param("stage-1 lr and init_std must be positive, weight_decay non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub params: PriorParams,
    pub reps: PriorReps,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_recall: Vec<f64>,
    pub train_loss: Vec<f64>,
}

/// Samples one `(u, b, b')` per training positive. Negatives come from
/// bundles that have training interactions and that `u` has not touched,
/// so bundles unseen in training never receive a gradient.
pub fn sample_triples(split: &ScenarioSplit, warm: &[usize], rng: &mut Rng) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::with_capacity(split.train_x.len());
    for &(u, b) in split.train_x.pairs() {
        if split.train_x.row_degree(u) >= warm.len() {
            continue;
        }
        let n = loop {
            let c = warm[rng.below(warm.len())];
            if !split.train_x.contains(u, c) {
                break c;
            }
        };
        out.push((u, b, n));
    }
    out
}

fn val_recall(split: &ScenarioSplit, reps: &PriorReps) -> Result<Option<f64>> {
    if split.val_x.is_empty() {
        return Ok(None);
    }
    let r = evaluate(split, &split.val_x, 20, |u, out| reps.score_user(u, out))?;
    Ok(Some(r.recall()))
}

fn nonzero_rows(g: &DenseMatrix) -> Vec<bool> {
    (0..g.rows()).map(|r| g.row(r).iter().any(|&v| v != 0.0)).collect()
}

/// Trains the shared user table and both views' entity tables with the
/// summed two-view BPR loss. Validation Recall@20 picks the best epoch;
/// training stops after `patience` epochs without improvement.
pub fn train_stage1(split: &ScenarioSplit, cfg: &Stage1Config) -> Result<Stage1Output> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let cat = split.catalog;
    let mut params = PriorParams::init(cat.n_users, cat.n_bundles, cat.n_items, cfg.dim, cfg.init_std, &mut root.fork(1));
    let model = PriorModel::from_split(split, cfg.layers);
    let warm = split.bint_warm_bundles();
    let d = cfg.dim;
    let mut adam = AdamState::new(
        AdamConfig::new(cfg.lr, cfg.weight_decay),
        &[cat.n_users * d, cat.n_bundles * d, cat.n_items * d],
    );
    let mut rng = root.fork(2);

    let mut best = params.clone();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut val_hist = Vec::new();
    let mut loss_hist = Vec::new();
    let mut epochs_run = 0;
    let mut step = 0;

    for epoch in 1..=cfg.epochs {
        let mut triples = sample_triples(split, &warm, &mut rng);
        rng.shuffle(&mut triples);
        let mut total = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            step += 1;
            let (loss, mut g) = model.bpr_loss_and_grad(&params, batch).map_err(|e| Error::Divergence {
                stage: "stage1",
                step,
                detail: e.to_string(),
            })?;
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            g.users.scale(scale);
            g.bundles.scale(scale);
            g.items.scale(scale);
            let active = [nonzero_rows(&g.users), nonzero_rows(&g.bundles), nonzero_rows(&g.items)];
            adam.step_rows(
                &mut [params.users.as_mut_slice(), params.bundles.as_mut_slice(), params.items.as_mut_slice()],
                &[g.users.as_slice(), g.bundles.as_slice(), g.items.as_slice()],
                d,
                &[&active[0], &active[1], &active[2]],
            )
            .map_err(|e| Error::Divergence {
                stage: "stage1",
                step,
                detail: e.to_string(),
            })?;
        }
        epochs_run = epoch;
        let mean_loss = total / triples.len().max(1) as f64;
        loss_hist.push(mean_loss);
        let reps = model.forward(&params)?;
        match val_recall(split, &reps)? {
            Some(r) => {
                val_hist.push(r);
                log::debug!("stage1 epoch {epoch}: loss {mean_loss:.5} val recall@20 {r:.4}");
                if r > best_score {
                    best_score = r;
                    best = params.clone();
                    best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        log::info!("stage1 early stop at epoch {epoch}, best epoch {best_epoch}");
                        break;
                    }
                }
            }
            None => {
                best = params.clone();
                best_epoch = epoch;
            }
        }
    }
    if cfg.epochs == 0 {
        best = params;
    }
    let reps = model.forward(&best)?;
    Ok(Stage1Output {
        params: best,
        reps,
        epochs_run,
        best_epoch,
        val_recall: val_hist,
        train_loss: loss_hist,
    })
}

impl Stage1Output {
    pub fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new(STAGE1_TAG, config).with_meta(json!({
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "val_recall": self.val_recall,
            "train_loss": self.train_loss,
        }));
        ck.push("users", self.params.users.clone());
        ck.push("bundles", self.params.bundles.clone());
        ck.push("items", self.params.items.clone());
        ck
    }
}

pub fn params_from_checkpoint(ck: &Checkpoint) -> Result<PriorParams> {
    if ck.stage != STAGE1_TAG {
        return Err(Error::Checkpoint(format!("expected stage {STAGE1_TAG}, found {}", ck.stage)));
    }
    Ok(PriorParams {
        users: ck.get("users")?.clone(),
        bundles: ck.get("bundles")?.clone(),
        items: ck.get("items")?.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_split, synth_blockmodel, Scenario, SplitRatios, SynthParams};

    fn split(scenario: Scenario) -> ScenarioSplit {
        let s = synth_blockmodel(&SynthParams::default()).unwrap();
        make_split(&s.data, scenario, SplitRatios::default(), 7).unwrap()
    }

    fn cfg(epochs: usize) -> Stage1Config {
        Stage1Config {
            epochs,
            dim: 16,
            ..Stage1Config::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let sp = split(Scenario::WarmStart);
        let out = train_stage1(&sp, &cfg(0)).unwrap();
        let c = cfg(0);
        let init = PriorParams::init(400, 200, 800, c.dim, c.init_std, &mut Rng::new(c.seed).fork(1));
        assert_eq!(out.params, init);
    }

    #[test]
    fn beats_random_on_validation() {
        let sp = split(Scenario::WarmStart);
        let out = train_stage1(&sp, &cfg(30)).unwrap();
        let reps = &out.reps;
        let r = evaluate(&sp, &sp.val_x, 20, |u, o| reps.score_user(u, o)).unwrap();
        assert!(r.recall() > r.all.random_recall, "{} vs {}", r.recall(), r.all.random_recall);
    }

    #[test]
    fn cold_bundles_collapse_to_scaled_initialisation() {
        let sp = split(Scenario::ColdStart);
        let c = cfg(5);
        let out = train_stage1(&sp, &c).unwrap();
        let init = PriorParams::init(400, 200, 800, c.dim, c.init_std, &mut Rng::new(c.seed).fork(1));
        let cold = sp.bint_cold_bundles();
        assert!(!cold.is_empty());
        for b in cold {
            assert_eq!(out.params.bundles.row(b), init.bundles.row(b));
            let expect: Vec<f64> = init.bundles.row(b).iter().map(|v| v / c.layers as f64).collect();
            assert_eq!(out.reps.bint.entity_rep.row(b), expect.as_slice());
        }
    }

    #[test]
    fn deterministic_checkpoints() {
        let sp = split(Scenario::ColdStart);
        let a = train_stage1(&sp, &cfg(3)).unwrap().to_checkpoint(json!({})).to_bytes().unwrap();
        let b = train_stage1(&sp, &cfg(3)).unwrap().to_checkpoint(json!({})).to_bytes().unwrap();
        assert_eq!(a, b);
    }
}
