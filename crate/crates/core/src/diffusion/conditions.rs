use serde::{Deserialize, Serialize};

use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::nn::{dot, sigmoid, AdamConfig, AdamState, DenseMatrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub init_std: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 50,
            batch_size: 256,
            lr: 1e-2,
            init_std: 0.1,
        }
    }
}

/// Composition-derived conditions. Depends only on bundle-item membership,
/// so it is defined for cold and warm entities alike.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionProvider {
    pub item_cond: DenseMatrix,
    pub bundle_cond: DenseMatrix,
}

impl ConditionProvider {
    /// Bundle conditions are the mean of member-item vectors.
    pub fn from_items(item_cond: DenseMatrix, z: &InteractionSet) -> Result<Self> {
        let mut bundle_cond = DenseMatrix::zeros(z.n_rows(), item_cond.cols());
        for b in 0..z.n_rows() {
            let items = z.row(b);
            if items.is_empty() {
                return Err(Error::EmptyBundle(b));
            }
            let row = bundle_cond.row_mut(b);
            for &i in items {
                row.iter_mut().zip(item_cond.row(i)).for_each(|(o, x)| *o += x);
            }
            row.iter_mut().for_each(|o| *o /= items.len() as f64);
        }
        Ok(Self { item_cond, bundle_cond })
    }
}

/// BPR matrix factorisation on bundle-item membership: each member item
/// should outscore a uniformly drawn non-member for its bundle.
pub fn pretrain_conditions(z: &InteractionSet, cfg: &ConditionConfig, rng: &mut Rng) -> Result<ConditionProvider> {
    if z.is_empty() {
        return Err(Error::Param("bundle-item affiliations are empty".into()));
    }
    let (nb, ni, d) = (z.n_rows(), z.n_cols(), cfg.dim);
    let mut init = rng.fork(1);
    let mut p = DenseMatrix::from_fn(nb, d, |_, _| cfg.init_std * init.normal());
    let mut q = DenseMatrix::from_fn(ni, d, |_, _| cfg.init_std * init.normal());
    let mut adam = AdamState::new(AdamConfig::new(cfg.lr, 0.0), &[nb * d, ni * d]);
    let mut pairs: Vec<(usize, usize)> = z.pairs().to_vec();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut pairs);
        for batch in pairs.chunks(cfg.batch_size.max(1)) {
            let mut gp = DenseMatrix::zeros(nb, d);
            let mut gq = DenseMatrix::zeros(ni, d);
            for &(b, i) in batch {
                if z.row_degree(b) >= ni {
                    continue;
                }
                let j = loop {
                    let c = rng.below(ni);
                    if !z.contains(b, c) {
                        break c;
                    }
                };
                let diff = dot(p.row(b), q.row(i)) - dot(p.row(b), q.row(j));
                let c = -sigmoid(-diff) / batch.len() as f64;
                for k in 0..d {
                    let pb = p.get(b, k);
                    gp.row_mut(b)[k] += c * (q.get(i, k) - q.get(j, k));
                    gq.row_mut(i)[k] += c * pb;
                    gq.row_mut(j)[k] -= c * pb;
                }
            }
            adam.step(&mut [p.as_mut_slice(), q.as_mut_slice()], &[gp.as_slice(), gq.as_slice()])?;
        }
    }
    ConditionProvider::from_items(q, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_blockmodel, Catalog, InteractionKind, SynthParams};
    use crate::nn::cosine;

    #[test]
    fn single_item_and_identical_bundles() {
        let cat = Catalog::new(1, 3, 4).unwrap();
        let z = InteractionSet::from_pairs(InteractionKind::BundleItem, &cat, [(0, 2), (1, 0), (1, 3), (2, 0), (2, 3)]).unwrap();
        let cfg = ConditionConfig {
            dim: 4,
            epochs: 3,
            ..ConditionConfig::default()
        };
        let c = pretrain_conditions(&z, &cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(c.bundle_cond.row(0), c.item_cond.row(2));
        assert_eq!(c.bundle_cond.row(1), c.bundle_cond.row(2));
    }

    #[test]
    fn planted_groups_separate() {
        let s = synth_blockmodel(&SynthParams::default()).unwrap();
        let cfg = ConditionConfig {
            dim: 32,
            ..ConditionConfig::default()
        };
        let c = pretrain_conditions(&s.data.z, &cfg, &mut Rng::new(4)).unwrap();
        let (mut within, mut across, mut nw, mut na) = (0.0, 0.0, 0, 0);
        for a in 0..200 {
            for b in (a + 1)..200 {
                let sim = cosine(c.bundle_cond.row(a), c.bundle_cond.row(b));
                if s.bundle_group[a] == s.bundle_group[b] {
                    within += sim;
                    nw += 1;
                } else {
                    across += sim;
                    na += 1;
                }
            }
        }
        let (w, x) = (within / nw as f64, across / na as f64);
        assert!(w > x, "within {w} across {x}");
    }
}
