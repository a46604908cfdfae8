//! Planted block-model datasets.
//!
//! Users, items and bundles each belong to one of `groups` latent groups.
//! Bundles are drawn as item sets from their own group, and users interact
//! with same-group items and bundles at rate `affinity`, with everything
//! else at rate `cross` (default `affinity / 10`). Cold bundles then share
//! latent structure with warm ones, which is what makes cold-start gains
//! measurable at this scale.

use serde::{Deserialize, Serialize};

use super::{Catalog, Dataset, InteractionKind, InteractionSet};
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_users: usize,
    pub n_items: usize,
    pub n_bundles: usize,
    pub groups: usize,
    pub bundle_size: usize,
    pub affinity: f64,
    /// Cross-group interaction probability; `None` means `affinity / 10`.
    #[serde(default)]
    pub cross: Option<f64>,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_users: 400,
            n_items: 800,
            n_bundles: 200,
            groups: 4,
            bundle_size: 10,
            affinity: 0.3,
            cross: None,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn cross_probability(&self) -> f64 {
        self.cross.unwrap_or(self.affinity / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub data: Dataset,
    pub user_group: Vec<usize>,
    pub item_group: Vec<usize>,
    pub bundle_group: Vec<usize>,
}

fn assign_groups(n: usize, groups: usize, rng: &mut Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut ids);
    let mut group = vec![0; n];
    for (k, id) in ids.into_iter().enumerate() {
        group[id] = k % groups;
    }
    group
}

pub fn synth_blockmodel(p: &SynthParams) -> Result<SynthData> {
    let cross = p.cross_probability();
    if p.groups < 2 {
        return Err(Error::Param("block model needs at least two groups".into()));
    }
    if !(0.0..=1.0).contains(&p.affinity) || !(0.0..=1.0).contains(&cross) || p.affinity <= cross {
        return Err(Error::Param(format!(
            "need 0 <= cross < affinity <= 1, got affinity {} cross {cross}",
            p.affinity
        )));
    }
    if p.bundle_size == 0 {
        return Err(Error::Param("bundle_size must be positive".into()));
    }
    let catalog = Catalog::new(p.n_users, p.n_bundles, p.n_items)?;
    let root = Rng::new(p.seed);
    let user_group = assign_groups(p.n_users, p.groups, &mut root.fork(1));
    let item_group = assign_groups(p.n_items, p.groups, &mut root.fork(2));
    let bundle_group = assign_groups(p.n_bundles, p.groups, &mut root.fork(3));

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); p.groups];
    for (i, &g) in item_group.iter().enumerate() {
        members[g].push(i);
    }
    let smallest = members.iter().map(Vec::len).min().unwrap_or(0);
    if smallest < p.bundle_size {
        return Err(Error::Param(format!(
            "bundle_size {} exceeds the smallest item group ({smallest})",
            p.bundle_size
        )));
    }

    let mut rng = root.fork(4);
    let mut z_pairs = Vec::with_capacity(p.n_bundles * p.bundle_size);
    for (b, &g) in bundle_group.iter().enumerate() {
        let pool = &mut members[g];
        // Partial Fisher-Yates: the first `bundle_size` slots become the bundle.
        for k in 0..p.bundle_size {
            let j = k + rng.below(pool.len() - k);
            pool.swap(k, j);
            z_pairs.push((b, pool[k]));
        }
    }

    let mut rng = root.fork(5);
    let mut y_pairs = Vec::new();
    for u in 0..p.n_users {
        for i in 0..p.n_items {
            let prob = if user_group[u] == item_group[i] { p.affinity } else { cross };
            if rng.bernoulli(prob) {
                y_pairs.push((u, i));
            }
        }
    }

    let mut rng = root.fork(6);
    let mut x_pairs = Vec::new();
    for u in 0..p.n_users {
        for b in 0..p.n_bundles {
            let prob = if user_group[u] == bundle_group[b] { p.affinity } else { cross };
            if rng.bernoulli(prob) {
                x_pairs.push((u, b));
            }
        }
    }

    let data = Dataset {
        catalog,
        x: InteractionSet::from_pairs(InteractionKind::UserBundle, &catalog, x_pairs)?,
        y: InteractionSet::from_pairs(InteractionKind::UserItem, &catalog, y_pairs)?,
        z: InteractionSet::from_pairs(InteractionKind::BundleItem, &catalog, z_pairs)?,
    };
    let lonely_users = (0..p.n_users)
        .filter(|&u| data.x.row_degree(u) == 0 && data.y.row_degree(u) == 0)
        .count();
    let lonely_bundles = (0..p.n_bundles).filter(|&b| data.x.col_degree(b) == 0).count();
    if lonely_users > 0 || lonely_bundles > 0 {
        log::warn!("block model left {lonely_users} users and {lonely_bundles} bundles without interactions");
    }
    Ok(SynthData {
        data,
        user_group,
        item_group,
        bundle_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthParams {
        SynthParams {
            n_users: 40,
            n_items: 80,
            n_bundles: 20,
            groups: 4,
            bundle_size: 5,
            affinity: 0.3,
            cross: None,
            seed,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_blockmodel(&small(1)).unwrap();
        let b = synth_blockmodel(&small(1)).unwrap();
        assert_eq!(a, b);
        let c = synth_blockmodel(&small(2)).unwrap();
        assert_ne!(a.data.x, c.data.x);
    }

    #[test]
    fn degenerate_probabilities_give_exact_blocks() {
        let mut p = small(3);
        p.affinity = 1.0;
        p.cross = Some(0.0);
        let s = synth_blockmodel(&p).unwrap();
        for u in 0..p.n_users {
            for b in 0..p.n_bundles {
                assert_eq!(s.data.x.contains(u, b), s.user_group[u] == s.bundle_group[b]);
            }
        }
    }

    #[test]
    fn bundles_are_same_group_item_sets() {
        let s = synth_blockmodel(&small(4)).unwrap();
        for b in 0..20 {
            let items = s.data.z.row(b);
            assert_eq!(items.len(), 5);
            assert!(items.iter().all(|&i| s.item_group[i] == s.bundle_group[b]));
        }
    }

    #[test]
    fn in_group_density_matches_affinity() {
        let p = SynthParams {
            seed: 11,
            ..SynthParams::default()
        };
        let s = synth_blockmodel(&p).unwrap();
        let (mut hits, mut total) = (0usize, 0usize);
        for u in 0..p.n_users {
            for i in 0..p.n_items {
                if s.user_group[u] == s.item_group[i] {
                    total += 1;
                    hits += s.data.y.contains(u, i) as usize;
                }
            }
            for b in 0..p.n_bundles {
                if s.user_group[u] == s.bundle_group[b] {
                    total += 1;
                    hits += s.data.x.contains(u, b) as usize;
                }
            }
        }
        let density = hits as f64 / total as f64;
        assert!((density - 0.3).abs() < 0.05, "density {density}");
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut p = small(0);
        p.groups = 1;
        assert!(synth_blockmodel(&p).is_err());
        let mut p = small(0);
        p.cross = Some(0.5);
        assert!(synth_blockmodel(&p).is_err());
        let mut p = small(0);
        p.bundle_size = 50;
        assert!(synth_blockmodel(&p).is_err());
    }
}
