use sha2::{Digest, Sha256};

use crate::dataset::{InteractionSet, ScenarioSplit};
use crate::diffusion::Stage2Output;
use crate::error::{Error, Result};
use crate::nn::{dot, DenseMatrix};
use crate::prior::PriorReps;

/// Cold-aware gate input: `log(1 + number of training interactions)`.
/// Exactly zero for entities without training interactions.
pub fn cold_aware_feature(degree: usize) -> f64 {
    (degree as f64).ln_1p()
}

/// Softmax over the two experts `[embedded, diffusion]` of `W a`, where
/// `w` is `2 x feature_dim`.
pub fn view_gate(feature: &[f64], w: &DenseMatrix) -> [f64; 2] {
    let l0 = dot(w.row(0), feature);
    let l1 = dot(w.row(1), feature);
    let m = l0.max(l1);
    let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// `w_e * r_e + w_d * r_d`.
pub fn fuse_entity(r_e: &[f64], r_d: &[f64], weights: [f64; 2]) -> Vec<f64> {
    r_e.iter().zip(r_d).map(|(e, d)| weights[0] * e + weights[1] * d).collect()
}

/// Trainable gates: one view gate per view and a shared output gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// `2 x 1`, bundle-level view gate.
    pub w_bint: DenseMatrix,
    /// `2 x 1`, item-level view gate (applied per item).
    pub w_iint: DenseMatrix,
    /// `2 x 2d`, output gate over `[r_bint | r_iint]`.
    pub w_out: DenseMatrix,
}

impl GateParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w_bint: DenseMatrix::zeros(2, 1),
            w_iint: DenseMatrix::zeros(2, 1),
            w_out: DenseMatrix::zeros(2, 2 * dim),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 3] {
        [self.w_bint.as_slice(), self.w_iint.as_slice(), self.w_out.as_slice()]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.w_bint.as_mut_slice(),
            self.w_iint.as_mut_slice(),
            self.w_out.as_mut_slice(),
        ]
    }
}

/// `tanh(W_out [r_bint | r_iint])`.
pub fn output_gate(w_out: &DenseMatrix, r_bint: &[f64], r_iint: &[f64]) -> [f64; 2] {
    let d = r_bint.len();
    let z = |v: usize| dot(&w_out.row(v)[..d], r_bint) + dot(&w_out.row(v)[d..], r_iint);
    [z(0).tanh(), z(1).tanh()]
}

/// `sum_v o_v <r_u^v, r_b^v>`.
pub fn predict(user_bint: &[f64], user_iint: &[f64], r_bint: &[f64], r_iint: &[f64], out_gate: [f64; 2]) -> f64 {
    out_gate[0] * dot(user_bint, r_bint) + out_gate[1] * dot(user_iint, r_iint)
}

/// Frozen outputs of both experts in both views plus gate inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenExperts {
    pub user_bint: DenseMatrix,
    pub user_iint: DenseMatrix,
    pub bundle_embed: DenseMatrix,
    pub bundle_diff: DenseMatrix,
    pub item_embed: DenseMatrix,
    pub item_diff: DenseMatrix,
    pub bundle_feature: Vec<f64>,
    pub item_feature: Vec<f64>,
    pub z: InteractionSet,
}

impl FrozenExperts {
    pub fn new(split: &ScenarioSplit, prior: &PriorReps, diffusion: &Stage2Output) -> Result<Self> {
        Self::from_tables(split, prior, &diffusion.bint.generated, &diffusion.iint.generated)
    }

    pub fn from_tables(
        split: &ScenarioSplit,
        prior: &PriorReps,
        bundle_diff: &DenseMatrix,
        item_diff: &DenseMatrix,
    ) -> Result<Self> {
        if bundle_diff.shape() != prior.bint.entity_rep.shape() || item_diff.shape() != prior.iint.entity_rep.shape() {
            return Err(Error::shape(
                "frozen experts",
                format!("{:?} / {:?}", prior.bint.entity_rep.shape(), prior.iint.entity_rep.shape()),
                format!("{:?} / {:?}", bundle_diff.shape(), item_diff.shape()),
            ));
        }
        Ok(Self {
            user_bint: prior.bint.user_rep.clone(),
            user_iint: prior.iint.user_rep.clone(),
            bundle_embed: prior.bint.entity_rep.clone(),
            bundle_diff: bundle_diff.clone(),
            item_embed: prior.iint.entity_rep.clone(),
            item_diff: item_diff.clone(),
            bundle_feature: (0..split.catalog.n_bundles)
                .map(|b| cold_aware_feature(split.train_x.col_degree(b)))
                .collect(),
            item_feature: (0..split.catalog.n_items)
                .map(|i| cold_aware_feature(split.train_y.col_degree(i)))
                .collect(),
            z: split.z.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.user_bint.cols()
    }

    pub fn n_bundles(&self) -> usize {
        self.bundle_embed.rows()
    }

    /// SHA-256 over every frozen table, for before/after comparisons.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in [
            &self.user_bint,
            &self.user_iint,
            &self.bundle_embed,
            &self.bundle_diff,
            &self.item_embed,
            &self.item_diff,
        ] {
            for x in t.as_slice() {
                h.update(x.to_le_bytes());
            }
        }
        for x in self.bundle_feature.iter().chain(&self.item_feature) {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Mean of the member items' rows of `table`.
    pub fn item_mean(&self, table: &DenseMatrix, b: usize) -> Vec<f64> {
        let items = self.z.row(b);
        let mut out = vec![0.0; table.cols()];
        for &i in items {
            out.iter_mut().zip(table.row(i)).for_each(|(o, x)| *o += x);
        }
        out.iter_mut().for_each(|o| *o /= items.len().max(1) as f64);
        out
    }
}

/// A synthetic cold bundle: convex combination of two source bundles with
/// a zero cold-aware feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoBundle {
    pub sources: (usize, usize),
    pub lambda: f64,
    pub bint_embed: Vec<f64>,
    pub bint_diff: Vec<f64>,
    /// Item-layer reps (already mean-aggregated over the bundle's items).
    pub iint_embed: Vec<f64>,
    pub iint_diff: Vec<f64>,
    pub feature: f64,
}

fn mix(lambda: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect()
}

pub fn interpolate_pseudo(bx: usize, by: usize, lambda: f64, ex: &FrozenExperts) -> Result<PseudoBundle> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Param(format!("interpolation ratio {lambda} outside [0, 1]")));
    }
    if bx == by {
        return Err(Error::Param(format!("pseudo bundle needs two distinct sources, got {bx} twice")));
    }
    Ok(PseudoBundle {
        sources: (bx, by),
        lambda,
        bint_embed: mix(lambda, ex.bundle_embed.row(bx), ex.bundle_embed.row(by)),
        bint_diff: mix(lambda, ex.bundle_diff.row(bx), ex.bundle_diff.row(by)),
        iint_embed: mix(lambda, &ex.item_mean(&ex.item_embed, bx), &ex.item_mean(&ex.item_embed, by)),
        iint_diff: mix(lambda, &ex.item_mean(&ex.item_diff, bx), &ex.item_mean(&ex.item_diff, by)),
        feature: 0.0,
    })
}

/// How expert outputs are combined at scoring time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Learned view and output gates.
    Gated,
    /// Ungated: `r^v = r_e + r_d`, view scores added.
    Summed,
    /// Embedded representations only, view scores added.
    PriorOnly,
}

/// Per-bundle fused representations and output-gate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedBundles {
    pub r_bint: DenseMatrix,
    pub r_iint: DenseMatrix,
    pub out_gate: Vec<[f64; 2]>,
    /// View-gate weights `[w_embed, w_diff]` per bundle and per item.
    pub bundle_gate: Vec<[f64; 2]>,
    pub item_gate: Vec<[f64; 2]>,
}

impl FusedBundles {
    pub fn build(ex: &FrozenExperts, gates: &GateParams, mode: FusionMode) -> Self {
        let (nb, d) = (ex.n_bundles(), ex.dim());
        let weights = |w: &DenseMatrix, a: f64| match mode {
            FusionMode::Gated => view_gate(&[a], w),
            FusionMode::Summed => [1.0, 1.0],
            FusionMode::PriorOnly => [1.0, 0.0],
        };
        let bundle_gate: Vec<[f64; 2]> = ex.bundle_feature.iter().map(|&a| weights(&gates.w_bint, a)).collect();
        let item_gate: Vec<[f64; 2]> = ex.item_feature.iter().map(|&a| weights(&gates.w_iint, a)).collect();
        let fused_items = DenseMatrix::from_rows(
            &(0..ex.item_embed.rows())
                .map(|i| fuse_entity(ex.item_embed.row(i), ex.item_diff.row(i), item_gate[i]))
                .collect::<Vec<_>>(),
        )
        .expect("finite fused items");
        let mut r_bint = DenseMatrix::zeros(nb, d);
        let mut r_iint = DenseMatrix::zeros(nb, d);
        let mut out_gate = Vec::with_capacity(nb);
        for b in 0..nb {
            r_bint
                .row_mut(b)
                .copy_from_slice(&fuse_entity(ex.bundle_embed.row(b), ex.bundle_diff.row(b), bundle_gate[b]));
            r_iint.row_mut(b).copy_from_slice(&ex.item_mean(&fused_items, b));
            out_gate.push(match mode {
                FusionMode::Gated => output_gate(&gates.w_out, r_bint.row(b), r_iint.row(b)),
                _ => [1.0, 1.0],
            });
        }
        Self {
            r_bint,
            r_iint,
            out_gate,
            bundle_gate,
            item_gate,
        }
    }

    pub fn score(&self, ex: &FrozenExperts, u: usize, b: usize) -> f64 {
        predict(
            ex.user_bint.row(u),
            ex.user_iint.row(u),
            self.r_bint.row(b),
            self.r_iint.row(b),
            self.out_gate[b],
        )
    }

    pub fn score_user(&self, ex: &FrozenExperts, u: usize, out: &mut [f64]) {
        for (b, s) in out.iter_mut().enumerate() {
            *s = self.score(ex, u, b);
        }
    }
}
