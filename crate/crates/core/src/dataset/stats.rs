use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioSplit, Warmth};

/// Intersection of a bundle's bundle-level and item-level interaction
/// warmth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Situation {
    WarmWarm,
    WarmCold,
    ColdWarm,
    ColdCold,
}

impl Situation {
    pub const ALL: [Situation; 4] = [
        Situation::WarmWarm,
        Situation::WarmCold,
        Situation::ColdWarm,
        Situation::ColdCold,
    ];

    pub fn of(bint: Warmth, iint: Warmth) -> Self {
        match (bint, iint) {
            (Warmth::Warm, Warmth::Warm) => Situation::WarmWarm,
            (Warmth::Warm, Warmth::Cold) => Situation::WarmCold,
            (Warmth::Cold, Warmth::Warm) => Situation::ColdWarm,
            (Warmth::Cold, Warmth::Cold) => Situation::ColdCold,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Situation::WarmWarm => "bint_warm&iint_warm",
            Situation::WarmCold => "bint_warm&iint_cold",
            Situation::ColdWarm => "bint_cold&iint_warm",
            Situation::ColdCold => "bint_cold&iint_cold",
        }
    }

    pub fn bint(self) -> Warmth {
        match self {
            Situation::WarmWarm | Situation::WarmCold => Warmth::Warm,
            _ => Warmth::Cold,
        }
    }
}

impl ScenarioSplit {
    pub fn situation(&self, bundle: usize) -> Situation {
        Situation::of(self.bundle_bint_label[bundle], self.bundle_iint_label[bundle])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationStats {
    pub situation: Situation,
    pub bundles: usize,
    /// Share of all bundles.
    pub bundle_ratio: f64,
    /// Share of the bundles with the same bundle-level label.
    pub ratio_within_bint: f64,
    pub test_interactions: usize,
    pub test_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStats {
    pub scenario: Scenario,
    pub n_bundles: usize,
    pub n_items: usize,
    pub warm_items: usize,
    pub cold_items: usize,
    pub bint_warm: usize,
    pub bint_cold: usize,
    pub iint_warm: usize,
    pub iint_cold: usize,
    pub mean_cold_item_ratio: f64,
    pub test_interactions: usize,
    pub situations: Vec<SituationStats>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn cold_stats(split: &ScenarioSplit) -> ColdStats {
    let n_b = split.catalog.n_bundles;
    let mut bundles = [0usize; 4];
    for b in 0..n_b {
        bundles[split.situation(b).index()] += 1;
    }
    let mut tests = [0usize; 4];
    for &(_, b) in split.test_x.pairs() {
        tests[split.situation(b).index()] += 1;
    }
    let bint_cold = bundles[2] + bundles[3];
    let bint_warm = n_b - bint_cold;
    let iint_cold = bundles[1] + bundles[3];
    let cold_items = split.item_label.iter().filter(|w| w.is_cold()).count();
    let n_test = split.test_x.len();
    let situations = Situation::ALL
        .iter()
        .map(|&s| {
            let i = s.index();
            let same_bint = if s.bint().is_cold() { bint_cold } else { bint_warm };
            SituationStats {
                situation: s,
                bundles: bundles[i],
                bundle_ratio: ratio(bundles[i], n_b),
                ratio_within_bint: ratio(bundles[i], same_bint),
                test_interactions: tests[i],
                test_share: ratio(tests[i], n_test),
            }
        })
        .collect();
    ColdStats {
        scenario: split.scenario,
        n_bundles: n_b,
        n_items: split.catalog.n_items,
        warm_items: split.catalog.n_items - cold_items,
        cold_items,
        bint_warm,
        bint_cold,
        iint_warm: n_b - iint_cold,
        iint_cold,
        mean_cold_item_ratio: split.cold_item_ratio.iter().sum::<f64>() / n_b as f64,
        test_interactions: n_test,
        situations,
    }
}

impl fmt::Display for ColdStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |a: usize, b: usize| 100.0 * ratio(a, b);
        writeln!(f, "scenario            {}", self.scenario.as_str())?;
        writeln!(f, "items               {:>8}", self.n_items)?;
        writeln!(f, "  warm items        {:>8} ({:6.2}%)", self.warm_items, pct(self.warm_items, self.n_items))?;
        writeln!(f, "  cold items        {:>8} ({:6.2}%)", self.cold_items, pct(self.cold_items, self.n_items))?;
        writeln!(f, "bundles             {:>8}", self.n_bundles)?;
        writeln!(f, "  bint warm         {:>8} ({:6.2}%)", self.bint_warm, pct(self.bint_warm, self.n_bundles))?;
        writeln!(f, "  bint cold         {:>8} ({:6.2}%)", self.bint_cold, pct(self.bint_cold, self.n_bundles))?;
        writeln!(f, "  iint warm         {:>8} ({:6.2}%)", self.iint_warm, pct(self.iint_warm, self.n_bundles))?;
        writeln!(f, "  iint cold         {:>8} ({:6.2}%)", self.iint_cold, pct(self.iint_cold, self.n_bundles))?;
        writeln!(f, "  mean cold-item ratio {:.4}", self.mean_cold_item_ratio)?;
        writeln!(f, "{:<22} {:>8} {:>9} {:>10} {:>8} {:>9}", "situation", "bundles", "of all", "of bint", "test", "of test")?;
        for s in &self.situations {
            writeln!(
                f,
                "{:<22} {:>8} {:>8.2}% {:>9.2}% {:>8} {:>8.2}%",
                s.situation.label(),
                s.bundles,
                100.0 * s.bundle_ratio,
                100.0 * s.ratio_within_bint,
                s.test_interactions,
                100.0 * s.test_share
            )?;
        }
        Ok(())
    }
}
