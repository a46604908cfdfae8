use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gates::{
    interpolate_pseudo, output_gate, predict, view_gate, FrozenExperts, FusedBundles, FusionMode, GateParams,
    PseudoBundle,
};
use crate::checkpoint::Checkpoint;
use crate::dataset::ScenarioSplit;
use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, AdamConfig, AdamState, DenseMatrix, Rng};
use crate::prior::{sample_triples, softplus};

pub const STAGE3_TAG: &str = "stage3";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage3Config {
    /// Pseudo-to-real triple ratio.
    pub eta: f64,
    /// Symmetric Beta parameter for interpolation ratios.
    pub beta_alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for Stage3Config {
    fn default() -> Self {
        Self {
            eta: 0.5,
            beta_alpha: 0.9,
            epochs: 30,
            batch_size: 1024,
            lr: 1e-2,
            weight_decay: 0.0,
            seed: 7,
        }
    }
}

impl Stage3Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Param(format!("eta must be a non-negative number, got {}", self.eta)));
        }
        if !(self.beta_alpha > 0.0) {
            return Err(Error::Param(format!("beta_alpha must be positive, got {}", self.beta_alpha)));
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Param("stage-3 batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Bundle side of a training pair.
#[derive(Debug, Clone, PartialEq)]
pub enum BundleRef {
    Real(usize),
    Pseudo(Box<PseudoBundle>),
}

/// `(user, positive, negative)` for the gate BPR loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTriple {
    pub user: usize,
    pub pos: BundleRef,
    pub neg: BundleRef,
}

struct Forward {
    r_bint: Vec<f64>,
    r_iint: Vec<f64>,
    out: [f64; 2],
}

fn forward(gates: &GateParams, fused: &FusedBundles, b: &BundleRef) -> Forward {
    match b {
        BundleRef::Real(b) => Forward {
            r_bint: fused.r_bint.row(*b).to_vec(),
            r_iint: fused.r_iint.row(*b).to_vec(),
            out: fused.out_gate[*b],
        },
        BundleRef::Pseudo(p) => {
            // Items of a pseudo bundle are pseudo cold as well.
            let wb = view_gate(&[p.feature], &gates.w_bint);
            let wi = view_gate(&[p.feature], &gates.w_iint);
            let r_bint: Vec<f64> = p.bint_embed.iter().zip(&p.bint_diff).map(|(e, d)| wb[0] * e + wb[1] * d).collect();
            let r_iint: Vec<f64> = p.iint_embed.iter().zip(&p.iint_diff).map(|(e, d)| wi[0] * e + wi[1] * d).collect();
            let out = output_gate(&gates.w_out, &r_bint, &r_iint);
            Forward { r_bint, r_iint, out }
        }
    }
}

/// Softmax backward: gradient on the logits from gradient on the weights,
/// times the scalar feature.
fn softmax_feature_grad(w: [f64; 2], gw: [f64; 2], feature: f64) -> [f64; 2] {
    let mean = w[0] * gw[0] + w[1] * gw[1];
    [w[0] * (gw[0] - mean) * feature, w[1] * (gw[1] - mean) * feature]
}

#[allow(clippy::too_many_arguments)]
fn backward(
    ex: &FrozenExperts,
    gates: &GateParams,
    fused: &FusedBundles,
    u: usize,
    b: &BundleRef,
    f: &Forward,
    coeff: f64,
    grads: &mut GateParams,
) {
    let d = ex.dim();
    let (ub, ui) = (ex.user_bint.row(u), ex.user_iint.row(u));
    let s = [dot(ub, &f.r_bint), dot(ui, &f.r_iint)];
    let dz = [s[0] * (1.0 - f.out[0] * f.out[0]), s[1] * (1.0 - f.out[1] * f.out[1])];
    let mut g_rb: Vec<f64> = ub.iter().map(|x| f.out[0] * x).collect();
    let mut g_ri: Vec<f64> = ui.iter().map(|x| f.out[1] * x).collect();
    for v in 0..2 {
        let w = gates.w_out.row(v);
        let gw = grads.w_out.row_mut(v);
        for k in 0..d {
            gw[k] += coeff * dz[v] * f.r_bint[k];
            gw[d + k] += coeff * dz[v] * f.r_iint[k];
            g_rb[k] += dz[v] * w[k];
            g_ri[k] += dz[v] * w[d + k];
        }
    }
    let add_view = |target: &mut DenseMatrix, w: [f64; 2], e: &[f64], dd: &[f64], g: &[f64], scale: f64, a: f64| {
        if a == 0.0 {
            return;
        }
        let gw = [scale * dot(g, e), scale * dot(g, dd)];
        let gl = softmax_feature_grad(w, gw, a);
        target.row_mut(0)[0] += coeff * gl[0];
        target.row_mut(1)[0] += coeff * gl[1];
    };
    match b {
        BundleRef::Real(b) => {
            let b = *b;
            add_view(
                &mut grads.w_bint,
                fused.bundle_gate[b],
                ex.bundle_embed.row(b),
                ex.bundle_diff.row(b),
                &g_rb,
                1.0,
                ex.bundle_feature[b],
            );
            let items = ex.z.row(b);
            let scale = 1.0 / items.len() as f64;
            for &i in items {
                add_view(
                    &mut grads.w_iint,
                    fused.item_gate[i],
                    ex.item_embed.row(i),
                    ex.item_diff.row(i),
                    &g_ri,
                    scale,
                    ex.item_feature[i],
                );
            }
        }
        BundleRef::Pseudo(p) => {
            let wb = view_gate(&[p.feature], &gates.w_bint);
            let wi = view_gate(&[p.feature], &gates.w_iint);
            add_view(&mut grads.w_bint, wb, &p.bint_embed, &p.bint_diff, &g_rb, 1.0, p.feature);
            add_view(&mut grads.w_iint, wi, &p.iint_embed, &p.iint_diff, &g_ri, 1.0, p.feature);
        }
    }
}

/// Summed BPR loss over `triples` and its gradient with respect to all
/// gate parameters. Expert outputs are read only.
pub fn gate_loss_and_grad(ex: &FrozenExperts, gates: &GateParams, triples: &[GateTriple]) -> (f64, GateParams) {
    let fused = FusedBundles::build(ex, gates, FusionMode::Gated);
    let mut grads = GateParams::zeros(ex.dim());
    let mut loss = 0.0;
    for t in triples {
        let fp = forward(gates, &fused, &t.pos);
        let fneg = forward(gates, &fused, &t.neg);
        let (ub, ui) = (ex.user_bint.row(t.user), ex.user_iint.row(t.user));
        let diff = predict(ub, ui, &fp.r_bint, &fp.r_iint, fp.out) - predict(ub, ui, &fneg.r_bint, &fneg.r_iint, fneg.out);
        loss += softplus(-diff);
        let c = -sigmoid(-diff);
        backward(ex, gates, &fused, t.user, &t.pos, &fp, c, &mut grads);
        backward(ex, gates, &fused, t.user, &t.neg, &fneg, -c, &mut grads);
    }
    (loss, grads)
}

fn two_distinct(pool: &[usize], rng: &mut Rng) -> (usize, usize) {
    let a = rng.below(pool.len());
    let mut b = rng.below(pool.len() - 1);
    if b >= a {
        b += 1;
    }
    (pool[a], pool[b])
}

/// `count` augmented triples. Each draws a user with at least two training
/// positives, interpolates two of them into a pseudo positive and two
/// warm bundles the user never touched into a pseudo negative.
pub fn sample_pseudo_triples(
    split: &ScenarioSplit,
    ex: &FrozenExperts,
    warm: &[usize],
    count: usize,
    beta_alpha: f64,
    rng: &mut Rng,
) -> Result<Vec<GateTriple>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let eligible: Vec<usize> = (0..split.catalog.n_users)
        .filter(|&u| {
            let deg = split.train_x.row_degree(u);
            deg >= 2 && warm.len() >= deg + 2
        })
        .collect();
    let skipped = split.catalog.n_users - eligible.len();
    if skipped > 0 {
        log::debug!("{skipped} users lack two positives or two negatives; skipped for augmentation");
    }
    if eligible.is_empty() {
        return Err(Error::Param("no user has two training positives; augmentation impossible".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let u = eligible[rng.below(eligible.len())];
        let pos = split.train_x.row(u);
        let (px, py) = two_distinct(pos, rng);
        let draw_neg = |rng: &mut Rng| loop {
            let c = warm[rng.below(warm.len())];
            if !split.train_x.contains(u, c) {
                break c;
            }
        };
        let nx = draw_neg(rng);
        let ny = loop {
            let c = draw_neg(rng);
            if c != nx {
                break c;
            }
        };
        let lp = rng.beta(beta_alpha, beta_alpha);
        let ln = rng.beta(beta_alpha, beta_alpha);
        out.push(GateTriple {
            user: u,
            pos: BundleRef::Pseudo(Box::new(interpolate_pseudo(px, py, lp, ex)?)),
            neg: BundleRef::Pseudo(Box::new(interpolate_pseudo(nx, ny, ln, ex)?)),
        });
    }
    Ok(out)
}

/// `round(eta * n_real)`.
pub fn pseudo_count(eta: f64, n_real: usize) -> usize {
    (eta * n_real as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage3Output {
    pub gates: GateParams,
    pub epoch_loss: Vec<f64>,
    pub eta: f64,
    pub real_per_epoch: usize,
    pub pseudo_per_epoch: usize,
}

/// Trains only the gates on frozen expert outputs, with `eta * |Q|` pseudo
/// cold triples mixed into every epoch.
pub fn train_stage3(split: &ScenarioSplit, ex: &FrozenExperts, cfg: &Stage3Config) -> Result<Stage3Output> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let mut rng = root.fork(1);
    let warm = split.bint_warm_bundles();
    let mut gates = GateParams::zeros(ex.dim());
    let sizes: Vec<usize> = gates.blocks().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(AdamConfig::new(cfg.lr, cfg.weight_decay), &sizes);
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let (mut real_n, mut pseudo_n) = (0, 0);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        let mut triples: Vec<GateTriple> = sample_triples(split, &warm, &mut rng)
            .into_iter()
            .map(|(u, b, n)| GateTriple {
                user: u,
                pos: BundleRef::Real(b),
                neg: BundleRef::Real(n),
            })
            .collect();
        real_n = triples.len();
        let extra = sample_pseudo_triples(split, ex, &warm, pseudo_count(cfg.eta, real_n), cfg.beta_alpha, &mut rng)?;
        pseudo_n = extra.len();
        triples.extend(extra);
        rng.shuffle(&mut triples);
        let mut total = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            step += 1;
            let (loss, mut g) = gate_loss_and_grad(ex, &gates, batch);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: "stage3",
                    step,
                    detail: format!("gate loss is {loss}"),
                });
            }
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            for blk in g.blocks_mut() {
                blk.iter_mut().for_each(|x| *x *= scale);
            }
            let gb = g.blocks();
            adam.step(&mut gates.blocks_mut(), &gb)?;
        }
        epoch_loss.push(total / triples.len().max(1) as f64);
    }
    Ok(Stage3Output {
        gates,
        epoch_loss,
        eta: cfg.eta,
        real_per_epoch: real_n,
        pseudo_per_epoch: pseudo_n,
    })
}

impl Stage3Output {
    pub fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        let mut ck = Checkpoint::new(STAGE3_TAG, config).with_meta(json!({
            "eta": self.eta,
            "epoch_loss": self.epoch_loss,
            "real_per_epoch": self.real_per_epoch,
            "pseudo_per_epoch": self.pseudo_per_epoch,
        }));
        ck.push("w_bint", self.gates.w_bint.clone());
        ck.push("w_iint", self.gates.w_iint.clone());
        ck.push("w_out", self.gates.w_out.clone());
        ck
    }
}

pub fn gates_from_checkpoint(ck: &Checkpoint) -> Result<GateParams> {
    if ck.stage != STAGE3_TAG {
        return Err(Error::Checkpoint(format!("expected stage {STAGE3_TAG}, found {}", ck.stage)));
    }
    Ok(GateParams {
        w_bint: ck.get("w_bint")?.clone(),
        w_iint: ck.get("w_iint")?.clone(),
        w_out: ck.get("w_out")?.clone(),
    })
}

/// `entity_class,id,view,w_embed,w_diff`: bundle gates in the bundle-level
/// view, item gates in the item-level view.
pub fn gates_csv(fused: &FusedBundles) -> String {
    let mut s = String::from("entity_class,id,view,w_embed,w_diff\n");
    for (b, w) in fused.bundle_gate.iter().enumerate() {
        writeln!(s, "bundle,{b},bint,{:.10},{:.10}", w[0], w[1]).unwrap();
    }
    for (i, w) in fused.item_gate.iter().enumerate() {
        writeln!(s, "item,{i},iint,{:.10},{:.10}", w[0], w[1]).unwrap();
    }
    s
}

/// `id,o_bint,o_iint`: output-gate weights per bundle.
pub fn output_gates_csv(fused: &FusedBundles) -> String {
    let mut s = String::from("id,o_bint,o_iint\n");
    for (b, o) in fused.out_gate.iter().enumerate() {
        writeln!(s, "{b},{:.10},{:.10}", o[0], o[1]).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moe::gates::tests::toy_experts;
    use crate::nn::finite_diff_check;

    fn random_gates(seed: u64, d: usize) -> GateParams {
        let mut rng = Rng::new(seed);
        GateParams {
            w_bint: DenseMatrix::from_fn(2, 1, |_, _| rng.normal()),
            w_iint: DenseMatrix::from_fn(2, 1, |_, _| rng.normal()),
            w_out: DenseMatrix::from_fn(2, 2 * d, |_, _| 0.5 * rng.normal()),
        }
    }

    #[test]
    fn gate_gradients_match_finite_differences() {
        let (_, ex) = toy_experts(4);
        let gates = random_gates(5, 2);
        let pseudo = interpolate_pseudo(0, 2, 0.3, &ex).unwrap();
        let pseudo_n = interpolate_pseudo(1, 3, 0.6, &ex).unwrap();
        let triples = vec![
            GateTriple { user: 0, pos: BundleRef::Real(0), neg: BundleRef::Real(3) },
            GateTriple { user: 1, pos: BundleRef::Real(1), neg: BundleRef::Real(2) },
            GateTriple { user: 2, pos: BundleRef::Real(2), neg: BundleRef::Real(1) },
            GateTriple { user: 0, pos: BundleRef::Pseudo(Box::new(pseudo)), neg: BundleRef::Pseudo(Box::new(pseudo_n)) },
        ];
        let params: Vec<Vec<f64>> = gates.blocks().iter().map(|b| b.to_vec()).collect();
        let f = |blocks: &[Vec<f64>]| {
            let g = GateParams {
                w_bint: DenseMatrix::from_vec(2, 1, blocks[0].clone()).unwrap(),
                w_iint: DenseMatrix::from_vec(2, 1, blocks[1].clone()).unwrap(),
                w_out: DenseMatrix::from_vec(2, 4, blocks[2].clone()).unwrap(),
            };
            let (l, gr) = gate_loss_and_grad(&ex, &g, &triples);
            (l, gr.blocks().iter().map(|b| b.to_vec()).collect())
        };
        let r = finite_diff_check(f, &params, 1e-5, 1e-4);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn pseudo_count_follows_eta() {
        assert_eq!(pseudo_count(0.0, 1000), 0);
        assert_eq!(pseudo_count(0.5, 1000), 500);
        assert_eq!(pseudo_count(0.3, 1000), 300);
    }

    #[test]
    fn pseudo_triples_use_user_positives() {
        let (split, ex) = toy_experts(6);
        let warm = split.bint_warm_bundles();
        // Only user 0 has two positives; warm bundles are 0, 1, 2.
        let err = sample_pseudo_triples(&split, &ex, &warm, 4, 0.9, &mut Rng::new(1));
        // User 0 touches 0 and 1, leaving a single warm negative.
        assert!(err.is_err());
    }

    #[test]
    fn csv_schema() {
        let (_, ex) = toy_experts(7);
        let fused = FusedBundles::build(&ex, &GateParams::zeros(2), FusionMode::Gated);
        let csv = gates_csv(&fused);
        assert!(csv.starts_with("entity_class,id,view,w_embed,w_diff\nbundle,0,bint,0.5000000000,0.5000000000\n"));
        assert_eq!(csv.lines().count(), 1 + 4 + 6);
    }

    #[test]
    fn training_leaves_experts_untouched() {
        let (split, ex) = toy_experts(8);
        let before = ex.checksum();
        let cfg = Stage3Config {
            eta: 0.0,
            epochs: 5,
            ..Stage3Config::default()
        };
        let out = train_stage3(&split, &ex, &cfg).unwrap();
        assert_eq!(ex.checksum(), before);
        assert_ne!(out.gates, GateParams::zeros(2));
        assert_eq!(out.pseudo_per_epoch, 0);
        assert_eq!(out.real_per_epoch, split.train_x.len());
    }

    #[test]
    fn zero_feature_bundles_sit_at_the_midpoint() {
        let (_, ex) = toy_experts(9);
        let gates = random_gates(10, 2);
        let fused = FusedBundles::build(&ex, &gates, FusionMode::Gated);
        // Bundle 3 has no training interactions.
        assert_eq!(ex.bundle_feature[3], 0.0);
        assert_eq!(fused.bundle_gate[3], [0.5, 0.5]);
        assert_ne!(fused.bundle_gate[0], [0.5, 0.5]);
    }
}
