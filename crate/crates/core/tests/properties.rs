use std::collections::BTreeSet;

use coldbundle::checkpoint::Checkpoint;
use coldbundle::dataset::{
    cold_stats, make_split, Catalog, Dataset, InteractionKind, InteractionSet, Scenario, SplitRatios,
};
use coldbundle::diffusion::{forward_noise, implied_noise, make_schedule, ScheduleKind};
use coldbundle::eval::{ndcg_at_k, recall_at_k, top_k};
use coldbundle::moe::view_gate;
use coldbundle::nn::DenseMatrix;
use coldbundle::prior::{normalize_adjacency, propagate, View};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Dataset> {
    (2usize..20, 4usize..30, 2usize..25).prop_flat_map(|(nu, nb, ni)| {
        (
            Just((nu, nb, ni)),
            prop::collection::vec((0..nu, 0..nb), 0..120),
            prop::collection::vec(0..nu, nb),
            prop::collection::vec((0..nu, 0..ni), 0..80),
            prop::collection::vec(prop::collection::vec(0..ni, 1..4), nb),
        )
            .prop_map(|((nu, nb, ni), x, owner, y, comp)| {
                let cat = Catalog::new(nu, nb, ni).unwrap();
                let x = x.into_iter().chain(owner.into_iter().enumerate().map(|(b, u)| (u, b)));
                let z = comp.into_iter().enumerate().flat_map(|(b, items)| items.into_iter().map(move |i| (b, i)));
                Dataset {
                    catalog: cat,
                    x: InteractionSet::from_pairs(InteractionKind::UserBundle, &cat, x).unwrap(),
                    y: InteractionSet::from_pairs(InteractionKind::UserItem, &cat, y).unwrap(),
                    z: InteractionSet::from_pairs(InteractionKind::BundleItem, &cat, z).unwrap(),
                }
            })
    })
}

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![Just(Scenario::ColdStart), Just(Scenario::AllBundle), Just(Scenario::WarmStart)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn split_partitions_interactions(data in dataset(), sc in scenario(), seed in any::<u64>()) {
        let s = make_split(&data, sc, SplitRatios::default(), seed).unwrap();
        let parts = [&s.train_x, &s.val_x, &s.test_x];
        let union: BTreeSet<_> = parts.iter().flat_map(|p| p.pairs().iter().copied()).collect();
        prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), data.x.len());
        prop_assert_eq!(union, data.x.pairs().iter().copied().collect::<BTreeSet<_>>());
        prop_assert_eq!(&s, &make_split(&data, sc, SplitRatios::default(), seed).unwrap());
    }

    #[test]
    fn labels_follow_training_degrees(data in dataset(), sc in scenario(), seed in any::<u64>()) {
        let s = make_split(&data, sc, SplitRatios::default(), seed).unwrap();
        for b in 0..data.catalog.n_bundles {
            prop_assert_eq!(s.bundle_bint_label[b].is_cold(), s.train_x.col_degree(b) == 0);
            let any_cold = data.z.row(b).iter().any(|&i| s.item_label[i].is_cold());
            prop_assert_eq!(s.bundle_iint_label[b].is_cold(), any_cold);
            prop_assert!((0.0..=1.0).contains(&s.cold_item_ratio[b]));
        }
        if sc == Scenario::ColdStart {
            for &(_, b) in s.test_x.pairs().iter().chain(s.val_x.pairs()) {
                prop_assert!(s.bundle_bint_label[b].is_cold());
            }
        }
    }

    #[test]
    fn cold_stats_split_four_ways(data in dataset(), sc in scenario(), seed in any::<u64>()) {
        let s = make_split(&data, sc, SplitRatios::default(), seed).unwrap();
        let st = cold_stats(&s);
        prop_assert_eq!(st.situations.iter().map(|x| x.bundles).sum::<usize>(), data.catalog.n_bundles);
        prop_assert_eq!(st.situations.iter().map(|x| x.test_interactions).sum::<usize>(), s.test_x.len());
        let share: f64 = st.situations.iter().map(|x| x.bundle_ratio).sum();
        prop_assert!((share - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_bounded_and_monotone_in_k(
        scores in prop::collection::vec(-3i32..3, 2..30),
        picks in prop::collection::vec(any::<bool>(), 30),
        k in 1usize..35,
    ) {
        let n = scores.len();
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let mut positives: Vec<usize> = (0..n).filter(|&i| picks[i]).collect();
        if positives.is_empty() {
            positives.push(0);
        }
        let ranked = top_k(&scores, 0..n, k);
        prop_assert_eq!(ranked.len(), k.min(n));
        let r = recall_at_k(&ranked, &positives, k);
        let g = ndcg_at_k(&ranked, &positives, k);
        prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0 + 1e-12).contains(&g));
        let wider = top_k(&scores, 0..n, k + 1);
        prop_assert!(recall_at_k(&wider, &positives, k + 1) >= r);
        // Putting every positive first is the ideal ranking.
        let boosted: Vec<f64> = (0..n).map(|i| if positives.contains(&i) { 100.0 } else { scores[i] }).collect();
        let ideal = top_k(&boosted, 0..n, k);
        prop_assert!((ndcg_at_k(&ideal, &positives, k) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn propagation_is_linear(
        edges in prop::collection::vec((0usize..6, 0usize..7), 1..20),
        a in -2.0f64..2.0,
        layers in 1usize..4,
    ) {
        let cat = Catalog::new(6, 7, 1).unwrap();
        let set = InteractionSet::from_pairs(InteractionKind::UserBundle, &cat, edges).unwrap();
        let g = normalize_adjacency(&set);
        let u = DenseMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 * 0.1 - 0.5);
        let e = DenseMatrix::from_fn(7, 3, |i, j| ((i + 2 * j) % 5) as f64 * 0.2);
        let base = propagate(View::Bint, &g, &u, &e, layers).unwrap();
        let scaled = propagate(View::Bint, &g, &u.scaled(a), &e.scaled(a), layers).unwrap();
        prop_assert!(scaled.user_rep.max_abs_diff(&base.user_rep.scaled(a)) < 1e-12);
        prop_assert!(scaled.entity_rep.max_abs_diff(&base.entity_rep.scaled(a)) < 1e-12);
    }

    #[test]
    fn noise_round_trip(x0 in prop::collection::vec(-5.0f64..5.0, 1..12), t in 1usize..=200, cosine in any::<bool>()) {
        let kind = if cosine { ScheduleKind::Cosine } else { ScheduleKind::Linear };
        let s = make_schedule(kind, 200).unwrap();
        let eps: Vec<f64> = x0.iter().map(|v| (v * 1.7).sin()).collect();
        let xt = forward_noise(&x0, t, &eps, &s).unwrap();
        let back = implied_noise(&xt, &x0, t, &s).unwrap();
        for (a, b) in back.iter().zip(&eps) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn view_gate_is_a_distribution(f in 0.0f64..10.0, w0 in -5.0f64..5.0, w1 in -5.0f64..5.0) {
        let w = DenseMatrix::from_vec(2, 1, vec![w0, w1]).unwrap();
        let g = view_gate(&[f], &w);
        prop_assert!(g.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((g[0] + g[1] - 1.0).abs() < 1e-12);
        prop_assert_eq!(view_gate(&[0.0], &w), [0.5, 0.5]);
    }

    #[test]
    fn checkpoint_bytes_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u32>()) {
        let m = DenseMatrix::from_fn(rows, cols, |i, j| ((i * 31 + j * 7) as f64 + seed as f64).sin());
        let mut ck = Checkpoint::new("probe", serde_json::json!({"seed": seed}));
        ck.push("table", m.clone());
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.get("table").unwrap(), &m);
        prop_assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());
    }
}
