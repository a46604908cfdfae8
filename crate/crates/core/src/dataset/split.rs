use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::io::{load_interactions, save_interactions};
use super::{Catalog, Dataset, InteractionKind, InteractionSet};
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Held-out bundles carry every val/test interaction.
    ColdStart,
    /// Val/test interactions split evenly between held-out and warm bundles.
    AllBundle,
    /// Interactions split uniformly.
    WarmStart,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::ColdStart => "cold_start",
            Scenario::AllBundle => "all_bundle",
            Scenario::WarmStart => "warm_start",
        }
    }

    /// Interpolation ratio used by the gating augmentation in this scenario.
    pub fn default_eta(self) -> f64 {
        match self {
            Scenario::WarmStart => 0.0,
            Scenario::AllBundle => 0.3,
            Scenario::ColdStart => 0.5,
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" | "cold_start" | "cold-start" => Ok(Scenario::ColdStart),
            "all" | "all_bundle" | "all-bundle" => Ok(Scenario::AllBundle),
            "warm" | "warm_start" | "warm-start" => Ok(Scenario::WarmStart),
            _ => Err(Error::Param(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Warmth {
    Warm,
    Cold,
}

impl Warmth {
    pub fn is_cold(self) -> bool {
        self == Warmth::Cold
    }

    fn of(degree: usize) -> Self {
        if degree == 0 {
            Warmth::Cold
        } else {
            Warmth::Warm
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Param(format!("split ratios must be in [0,1] and sum to 1, got {parts:?}")));
        }
        Ok(())
    }
}

/// Train/val/test partition of the user-bundle relation with the warm/cold
/// labels it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSplit {
    pub scenario: Scenario,
    pub catalog: Catalog,
    pub train_x: InteractionSet,
    pub val_x: InteractionSet,
    pub test_x: InteractionSet,
    /// User-item interactions available for training (all of them).
    pub train_y: InteractionSet,
    pub z: InteractionSet,
    pub bundle_bint_label: Vec<Warmth>,
    pub bundle_iint_label: Vec<Warmth>,
    pub item_label: Vec<Warmth>,
    pub cold_item_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFile {
    pub bint_cold: Vec<usize>,
    pub item_cold: Vec<usize>,
}

impl ScenarioSplit {
    /// Assembles a split and derives every label from the training portion.
    pub fn from_parts(
        scenario: Scenario,
        catalog: Catalog,
        train_x: InteractionSet,
        val_x: InteractionSet,
        test_x: InteractionSet,
        train_y: InteractionSet,
        z: InteractionSet,
    ) -> Self {
        let bundle_bint_label: Vec<Warmth> =
            (0..catalog.n_bundles).map(|b| Warmth::of(train_x.col_degree(b))).collect();
        let item_label: Vec<Warmth> =
            (0..catalog.n_items).map(|i| Warmth::of(train_y.col_degree(i))).collect();
        let mut bundle_iint_label = Vec::with_capacity(catalog.n_bundles);
        let mut cold_item_ratio = Vec::with_capacity(catalog.n_bundles);
        for b in 0..catalog.n_bundles {
            let items = z.row(b);
            let cold = items.iter().filter(|&&i| item_label[i].is_cold()).count();
            bundle_iint_label.push(if cold > 0 { Warmth::Cold } else { Warmth::Warm });
            cold_item_ratio.push(if items.is_empty() { 0.0 } else { cold as f64 / items.len() as f64 });
        }
        Self {
            scenario,
            catalog,
            train_x,
            val_x,
            test_x,
            train_y,
            z,
            bundle_bint_label,
            bundle_iint_label,
            item_label,
            cold_item_ratio,
        }
    }

    pub fn labels(&self) -> LabelFile {
        LabelFile {
            bint_cold: ids_where(&self.bundle_bint_label, Warmth::is_cold),
            item_cold: ids_where(&self.item_label, Warmth::is_cold),
        }
    }

    pub fn bint_cold_bundles(&self) -> Vec<usize> {
        ids_where(&self.bundle_bint_label, Warmth::is_cold)
    }

    pub fn bint_warm_bundles(&self) -> Vec<usize> {
        ids_where(&self.bundle_bint_label, |w| !w.is_cold())
    }

    pub fn warm_items(&self) -> Vec<usize> {
        ids_where(&self.item_label, |w| !w.is_cold())
    }
}

fn ids_where(labels: &[Warmth], f: impl Fn(Warmth) -> bool) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &w)| f(w))
        .map(|(i, _)| i)
        .collect()
}

/// Partitions the user-bundle interactions according to `scenario`.
pub fn make_split(data: &Dataset, scenario: Scenario, ratios: SplitRatios, seed: u64) -> Result<ScenarioSplit> {
    ratios.validate()?;
    let x = &data.x;
    if x.is_empty() {
        return Err(Error::DegenerateSplit("user-bundle interactions are empty".into()));
    }
    let mut rng = Rng::new(seed).fork(0x5911_7);
    let pairs = x.pairs();
    let n_total = pairs.len();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    match scenario {
        Scenario::WarmStart => {
            let mut order: Vec<usize> = (0..n_total).collect();
            rng.shuffle(&mut order);
            let n_test = (ratios.test * n_total as f64).round() as usize;
            let n_val = (ratios.val * n_total as f64).round() as usize;
            for (k, &i) in order.iter().enumerate() {
                if k < n_test {
                    test.push(pairs[i]);
                } else if k < n_test + n_val {
                    val.push(pairs[i]);
                } else {
                    train.push(pairs[i]);
                }
            }
        }
        Scenario::ColdStart => {
            let n_b = data.catalog.n_bundles;
            let mut bundles: Vec<usize> = (0..n_b).collect();
            rng.shuffle(&mut bundles);
            let n_test = (ratios.test * n_b as f64).round() as usize;
            let n_val = (ratios.val * n_b as f64).round() as usize;
            let mut role = vec![0u8; n_b]; // 0 train, 1 val, 2 test
            for (k, &b) in bundles.iter().enumerate() {
                role[b] = if k < n_test {
                    2
                } else if k < n_test + n_val {
                    1
                } else {
                    0
                };
            }
            for &(u, b) in pairs {
                match role[b] {
                    2 => test.push((u, b)),
                    1 => val.push((u, b)),
                    _ => train.push((u, b)),
                }
            }
        }
        Scenario::AllBundle => {
            let n_b = data.catalog.n_bundles;
            let target_test = (ratios.test * n_total as f64).round() as usize;
            let target_val = (ratios.val * n_total as f64).round() as usize;
            let mut bundles: Vec<usize> = (0..n_b).collect();
            rng.shuffle(&mut bundles);
            let mut role = vec![0u8; n_b];
            let mut cursor = 0;
            // Whole held-out bundles until the cold half is reached (rounded up).
            let mut take_cold = |target: usize, tag: u8, role: &mut Vec<u8>| -> usize {
                let mut got = 0;
                while got < target.div_ceil(2) && cursor < bundles.len() {
                    let b = bundles[cursor];
                    cursor += 1;
                    role[b] = tag;
                    got += x.col_degree(b);
                }
                got
            };
            let cold_test = take_cold(target_test, 2, &mut role);
            let cold_val = take_cold(target_val, 1, &mut role);
            let mut warm: Vec<(usize, usize)> = Vec::new();
            for &(u, b) in pairs {
                match role[b] {
                    2 => test.push((u, b)),
                    1 => val.push((u, b)),
                    _ => warm.push((u, b)),
                }
            }
            rng.shuffle(&mut warm);
            let warm_test = target_test.saturating_sub(cold_test).min(warm.len());
            let warm_val = target_val.saturating_sub(cold_val).min(warm.len() - warm_test);
            for (k, p) in warm.into_iter().enumerate() {
                if k < warm_test {
                    test.push(p);
                } else if k < warm_test + warm_val {
                    val.push(p);
                } else {
                    train.push(p);
                }
            }
        }
    }

    if train.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "{} split of {n_total} interactions left train={} test={}",
            scenario.as_str(),
            train.len(),
            test.len()
        )));
    }
    let cat = data.catalog;
    let k = InteractionKind::UserBundle;
    Ok(ScenarioSplit::from_parts(
        scenario,
        cat,
        InteractionSet::from_pairs(k, &cat, train)?,
        InteractionSet::from_pairs(k, &cat, val)?,
        InteractionSet::from_pairs(k, &cat, test)?,
        data.y.clone(),
        data.z.clone(),
    ))
}

/// Writes `train.tsv`, `val.tsv`, `test.tsv`, `labels.json` and a
/// `scenario.txt` marker into `dir`.
pub fn save_split(split: &ScenarioSplit, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_interactions(&split.train_x, dir.join("train.tsv"))?;
    save_interactions(&split.val_x, dir.join("val.tsv"))?;
    save_interactions(&split.test_x, dir.join("test.tsv"))?;
    let mut labels = serde_json::to_string(&split.labels())?;
    labels.push('\n');
    fs::write(dir.join("labels.json"), labels)?;
    fs::write(dir.join("scenario.txt"), format!("{}\n", split.scenario.as_str()))?;
    Ok(())
}

/// Reads a split written by [`save_split`] and checks its labels against
/// the ones recomputed from the training portion.
pub fn load_split(data: &Dataset, dir: impl AsRef<Path>) -> Result<ScenarioSplit> {
    let dir = dir.as_ref();
    let scenario: Scenario = fs::read_to_string(dir.join("scenario.txt"))?.trim().parse()?;
    let k = InteractionKind::UserBundle;
    let cat = data.catalog;
    let split = ScenarioSplit::from_parts(
        scenario,
        cat,
        load_interactions(dir.join("train.tsv"), k, &cat)?,
        load_interactions(dir.join("val.tsv"), k, &cat)?,
        load_interactions(dir.join("test.tsv"), k, &cat)?,
        data.y.clone(),
        data.z.clone(),
    );
    let stored: LabelFile = serde_json::from_str(&fs::read_to_string(dir.join("labels.json"))?)?;
    if stored != split.labels() {
        return Err(Error::Param(format!(
            "{} disagrees with labels recomputed from train.tsv",
            dir.join("labels.json").display()
        )));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 10 bundles, 3 users; bundle b has items {b, b+1 mod 6}; every
    /// user interacts with every bundle.
    fn toy() -> Dataset {
        let catalog = Catalog::new(3, 10, 6).unwrap();
        let x = InteractionSet::from_pairs(
            InteractionKind::UserBundle,
            &catalog,
            (0..3).flat_map(|u| (0..10).map(move |b| (u, b))),
        )
        .unwrap();
        let y = InteractionSet::from_pairs(InteractionKind::UserItem, &catalog, [(0, 0), (1, 1), (2, 2), (0, 3)]).unwrap();
        let z = InteractionSet::from_pairs(
            InteractionKind::BundleItem,
            &catalog,
            (0..10).flat_map(|b| [(b, b % 6), (b, (b + 1) % 6)]),
        )
        .unwrap();
        Dataset { catalog, x, y, z }
    }

    #[test]
    fn cold_start_holds_out_whole_bundles() {
        let data = toy();
        let s = make_split(&data, Scenario::ColdStart, SplitRatios::default(), 4).unwrap();
        let mut test_bundles: Vec<usize> = s.test_x.pairs().iter().map(|p| p.1).collect();
        test_bundles.dedup();
        test_bundles.sort();
        test_bundles.dedup();
        let mut val_bundles: Vec<usize> = s.val_x.pairs().iter().map(|p| p.1).collect();
        val_bundles.sort();
        val_bundles.dedup();
        assert_eq!(test_bundles.len(), 2);
        assert_eq!(val_bundles.len(), 1);
        for &b in test_bundles.iter().chain(&val_bundles) {
            assert_eq!(s.train_x.col_degree(b), 0);
            assert_eq!(s.bundle_bint_label[b], Warmth::Cold);
        }
        assert_eq!(s.test_x.len(), 6);
        assert_eq!(s.bint_cold_bundles().len(), 3);
    }

    #[test]
    fn warm_start_labels_come_from_train_only() {
        let data = toy();
        let s = make_split(&data, Scenario::WarmStart, SplitRatios::default(), 1).unwrap();
        assert_eq!(s.train_x.len() + s.val_x.len() + s.test_x.len(), data.x.len());
        for b in 0..10 {
            assert_eq!(s.bundle_bint_label[b].is_cold(), s.train_x.col_degree(b) == 0);
        }
    }

    #[test]
    fn all_bundle_mixes_cold_and_warm_evenly() {
        let data = toy();
        let s = make_split(&data, Scenario::AllBundle, SplitRatios::default(), 9).unwrap();
        assert_eq!(s.train_x.len() + s.val_x.len() + s.test_x.len(), 30);
        assert_eq!(s.test_x.len(), 6);
        let cold_test = s
            .test_x
            .pairs()
            .iter()
            .filter(|p| s.bundle_bint_label[p.1].is_cold())
            .count();
        // Target 6: cold side gets ceil(6/2) = 3 interactions (one whole bundle).
        assert_eq!(cold_test, 3);
    }

    #[test]
    fn item_labels_and_cold_ratio() {
        let data = toy();
        let s = make_split(&data, Scenario::WarmStart, SplitRatios::default(), 1).unwrap();
        // Items 4 and 5 have no user-item interactions.
        assert_eq!(s.labels().item_cold, vec![4, 5]);
        assert_eq!(s.cold_item_ratio[3], 0.5); // {3, 4}
        assert_eq!(s.cold_item_ratio[4], 1.0); // {4, 5}
        assert_eq!(s.cold_item_ratio[0], 0.0); // {0, 1}
        assert_eq!(s.bundle_iint_label[0], Warmth::Warm);
        assert_eq!(s.bundle_iint_label[5], Warmth::Cold); // {5, 0}
    }

    #[test]
    fn same_seed_same_split() {
        let data = toy();
        for sc in [Scenario::ColdStart, Scenario::AllBundle, Scenario::WarmStart] {
            let a = make_split(&data, sc, SplitRatios::default(), 77).unwrap();
            let b = make_split(&data, sc, SplitRatios::default(), 77).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn degenerate_split_is_an_error() {
        let catalog = Catalog::new(1, 1, 1).unwrap();
        let x = InteractionSet::from_pairs(InteractionKind::UserBundle, &catalog, [(0, 0)]).unwrap();
        let data = Dataset {
            catalog,
            x,
            y: InteractionSet::empty(InteractionKind::UserItem, &catalog),
            z: InteractionSet::from_pairs(InteractionKind::BundleItem, &catalog, [(0, 0)]).unwrap(),
        };
        let err = make_split(&data, Scenario::WarmStart, SplitRatios::default(), 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(_)));
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios {
            train: 0.5,
            val: 0.1,
            test: 0.2,
        };
        assert!(make_split(&toy(), Scenario::WarmStart, r, 0).is_err());
    }

    #[test]
    fn save_and_load_round_trip() {
        let data = toy();
        let s = make_split(&data, Scenario::ColdStart, SplitRatios::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_split(&s, dir.path()).unwrap();
        assert_eq!(load_split(&data, dir.path()).unwrap(), s);
        let labels = fs::read_to_string(dir.path().join("labels.json")).unwrap();
        assert!(labels.starts_with("{\"bint_cold\":["));
    }
}
