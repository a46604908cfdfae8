use std::cmp::Ordering;

/// Descending score, ties broken by ascending id.
#[inline]
pub fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .expect("scores must be finite")
        .then(a.0.cmp(&b.0))
}

/// The first `k` candidates of `candidates` under [`rank_order`].
pub fn top_k(scores: &[f64], candidates: impl IntoIterator<Item = usize>, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = candidates.into_iter().map(|c| (c, scores[c])).collect();
    if scored.len() > k && k > 0 {
        scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        scored.truncate(k);
    }
    scored.sort_unstable_by(|a, b| rank_order(*a, *b));
    scored.truncate(k);
    scored.into_iter().map(|(c, _)| c).collect()
}

/// `|top-k ∩ positives| / |positives|`. `positives` must be sorted.
pub fn recall_at_k(ranked: &[usize], positives: &[usize], k: usize) -> f64 {
    assert!(k >= 1, "k must be positive");
    assert!(!positives.is_empty(), "recall needs at least one positive");
    let hits = ranked
        .iter()
        .take(k)
        .filter(|c| positives.binary_search(c).is_ok())
        .count();
    hits as f64 / positives.len() as f64
}

/// Binary-relevance NDCG with the ideal list truncated at
/// `min(k, |positives|)`. `positives` must be sorted.
pub fn ndcg_at_k(ranked: &[usize], positives: &[usize], k: usize) -> f64 {
    assert!(k >= 1, "k must be positive");
    assert!(!positives.is_empty(), "ndcg needs at least one positive");
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, c)| positives.binary_search(c).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(positives.len()))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    dcg / idcg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_examples() {
        let ranked: Vec<usize> = (0..30).collect();
        assert_eq!(recall_at_k(&ranked, &[1, 2, 3], 20), 1.0);
        assert_eq!(recall_at_k(&ranked, &[25, 26], 20), 0.0);
        assert_eq!(recall_at_k(&ranked, &[4, 10, 29], 20), 2.0 / 3.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[7, 1, 2], &[7], 20), 1.0);
        let v = ndcg_at_k(&[1, 7, 2], &[7], 2);
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((v - 0.63093).abs() < 1e-5);
        let v = ndcg_at_k(&[5, 0, 6], &[5, 6], 3);
        let expect = (1.0 + 0.5) / (1.0 + 1.0 / 3f64.log2());
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn top_k_breaks_ties_by_id() {
        let scores = [0.5, 0.9, 0.5, 0.5, 0.1];
        assert_eq!(top_k(&scores, 0..5, 3), vec![1, 0, 2]);
        assert_eq!(top_k(&scores, [4, 3, 2], 10), vec![2, 3, 4]);
        assert_eq!(top_k(&[0.0; 6], 0..6, 4), vec![0, 1, 2, 3]);
    }
}
