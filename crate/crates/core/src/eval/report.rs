use serde::{Deserialize, Serialize};

use super::metrics::{ndcg_at_k, recall_at_k, top_k};
use crate::dataset::{InteractionSet, Scenario, ScenarioSplit, Situation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    /// Users with at least one held-out positive in the subset.
    pub users: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// Expected recall of a uniformly random ranking, `mean(min(1, k / |candidates|))`.
    pub random_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationHits {
    pub situation: Situation,
    pub hits: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: Scenario,
    pub k: usize,
    /// How per-user metrics are averaged.
    pub averaging: String,
    pub all: SubsetMetrics,
    /// Ranking all candidates, counting only bundle-level cold positives.
    pub cold: SubsetMetrics,
    /// Ranking all candidates, counting only bundle-level warm positives.
    pub warm: SubsetMetrics,
    pub hits: Vec<SituationHits>,
    pub total_hits: usize,
}

impl MetricReport {
    pub fn recall(&self) -> f64 {
        self.all.recall
    }

    pub fn ndcg(&self) -> f64 {
        self.all.ndcg
    }
}

#[derive(Default)]
struct Acc {
    users: usize,
    recall: f64,
    ndcg: f64,
    random: f64,
}

impl Acc {
    fn add(&mut self, ranked: &[usize], positives: &[usize], k: usize, n_candidates: usize) {
        if positives.is_empty() {
            return;
        }
        self.users += 1;
        self.recall += recall_at_k(ranked, positives, k);
        self.ndcg += ndcg_at_k(ranked, positives, k);
        self.random += (k as f64 / n_candidates.max(1) as f64).min(1.0);
    }

    fn finish(self) -> SubsetMetrics {
        let n = self.users.max(1) as f64;
        SubsetMetrics {
            users: self.users,
            recall: self.recall / n,
            ndcg: self.ndcg / n,
            random_recall: self.random / n,
        }
    }
}

/// Per-user ranking under the all-unrated-item protocol: every bundle the
/// user has no training interaction with is a candidate.
pub fn rank_user(split: &ScenarioSplit, user: usize, scores: &[f64], k: usize) -> Vec<usize> {
    let train = split.train_x.row(user);
    let ranked = top_k(
        scores,
        (0..split.catalog.n_bundles).filter(|b| train.binary_search(b).is_err()),
        k,
    );
    assert!(
        ranked.iter().all(|b| train.binary_search(b).is_err()),
        "train positive leaked into ranking"
    );
    ranked
}

/// Top-`k` evaluation of `holdout` (usually `split.test_x`).
///
/// `score_user(u, out)` must fill `out` (length `n_bundles`) with finite
/// scores. Users without held-out positives are skipped.
pub fn evaluate<F>(split: &ScenarioSplit, holdout: &InteractionSet, k: usize, mut score_user: F) -> Result<MetricReport>
where
    F: FnMut(usize, &mut [f64]),
{
    if k == 0 {
        return Err(Error::Param("k must be positive".into()));
    }
    let n_b = split.catalog.n_bundles;
    let mut scores = vec![0.0; n_b];
    let (mut all, mut cold, mut warm) = (Acc::default(), Acc::default(), Acc::default());
    let mut hits = [0usize; 4];
    let mut positives_by = [0usize; 4];
    for u in 0..split.catalog.n_users {
        let positives = holdout.row(u);
        if positives.is_empty() {
            continue;
        }
        score_user(u, &mut scores);
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("score of user {u}"),
                index: i,
            });
        }
        let ranked = rank_user(split, u, &scores, k);
        let n_cand = n_b - split.train_x.row_degree(u);
        let (cold_pos, warm_pos): (Vec<usize>, Vec<usize>) =
            positives.iter().partition(|&&b| split.bundle_bint_label[b].is_cold());
        all.add(&ranked, positives, k, n_cand);
        cold.add(&ranked, &cold_pos, k, n_cand);
        warm.add(&ranked, &warm_pos, k, n_cand);
        for &b in positives {
            positives_by[split.situation(b).index()] += 1;
        }
        for b in &ranked {
            if positives.binary_search(b).is_ok() {
                hits[split.situation(*b).index()] += 1;
            }
        }
    }
    Ok(MetricReport {
        scenario: split.scenario,
        k,
        averaging: "mean over users with at least one held-out positive".into(),
        all: all.finish(),
        cold: cold.finish(),
        warm: warm.finish(),
        hits: Situation::ALL
            .iter()
            .map(|&s| SituationHits {
                situation: s,
                hits: hits[s.index()],
                positives: positives_by[s.index()],
            })
            .collect(),
        total_hits: hits.iter().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_split, synth_blockmodel, SplitRatios, SynthParams};
    use crate::nn::Rng;

    fn split() -> ScenarioSplit {
        let s = synth_blockmodel(&SynthParams::default()).unwrap();
        make_split(&s.data, Scenario::ColdStart, SplitRatios::default(), 7).unwrap()
    }

    #[test]
    fn oracle_scores_give_full_recall() {
        let sp = split();
        let max_pos = (0..sp.catalog.n_users).map(|u| sp.test_x.row_degree(u)).max().unwrap();
        assert!(max_pos <= 20);
        let r = evaluate(&sp, &sp.test_x, 20, |u, out| {
            for (b, s) in out.iter_mut().enumerate() {
                *s = sp.test_x.contains(u, b) as u8 as f64;
            }
        })
        .unwrap();
        assert_eq!(r.all.recall, 1.0);
        assert_eq!(r.all.ndcg, 1.0);
        assert_eq!(r.total_hits, sp.test_x.len());
        assert_eq!(r.hits.iter().map(|h| h.hits).sum::<usize>(), r.total_hits);
    }

    #[test]
    fn random_scores_track_analytic_baseline() {
        let sp = split();
        let mut recalls = Vec::new();
        let mut baseline = 0.0;
        for seed in 0..10 {
            let mut rng = Rng::new(seed);
            let r = evaluate(&sp, &sp.test_x, 20, |_, out| out.iter_mut().for_each(|s| *s = rng.next_f64())).unwrap();
            recalls.push(r.all.recall);
            baseline = r.all.random_recall;
        }
        let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
        assert!((mean - baseline).abs() <= 0.5 * baseline, "mean {mean} baseline {baseline}");
    }

    #[test]
    fn ties_are_deterministic() {
        let sp = split();
        let a = evaluate(&sp, &sp.test_x, 20, |_, out| out.fill(0.0)).unwrap();
        let b = evaluate(&sp, &sp.test_x, 20, |_, out| out.fill(0.0)).unwrap();
        assert_eq!(a, b);
        // With all-equal scores the ranking is the lowest unrated ids.
        let u = (0..sp.catalog.n_users).find(|&u| sp.test_x.row_degree(u) > 0).unwrap();
        let ranked = rank_user(&sp, u, &vec![0.0; sp.catalog.n_bundles], 5);
        let expect: Vec<usize> = (0..sp.catalog.n_bundles).filter(|&b| !sp.train_x.contains(u, b)).take(5).collect();
        assert_eq!(ranked, expect);
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let sp = split();
        assert!(evaluate(&sp, &sp.test_x, 20, |_, out| out.fill(f64::NAN)).is_err());
    }
}
