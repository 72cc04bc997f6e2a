//! Ranking metrics over graded rewards. Relevance for MAP is
//! reward > 0; NDCG uses the reward value itself as the gain with the
//! standard log2 position discount.

fn dcg(rewards: &[f64]) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| r / ((i + 2) as f64).log2())
        .sum()
}

/// Mean of precision-at-hit over the relevant positions. None when the
/// list has no relevant item (undefined ideal).
pub fn map_score(ranked_rewards: &[f64]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &r) in ranked_rewards.iter().enumerate() {
        if r > 0.0 {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    (hits > 0).then(|| acc / hits as f64)
}

/// NDCG@k with graded gains. None when the ideal DCG is zero.
pub fn ndcg_at_k(ranked_rewards: &[f64], k: usize) -> Option<f64> {
    if k == 0 || ranked_rewards.is_empty() {
        return None;
    }
    let n = k.min(ranked_rewards.len());
    let actual = dcg(&ranked_rewards[..n]);
    let mut ideal: Vec<f64> = ranked_rewards.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let idcg = dcg(&ideal[..n]);
    (idcg > 0.0).then(|| actual / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_ordering_scores_one() {
        let rewards = [5.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(ndcg_at_k(&rewards, 5), Some(1.0));
        assert_eq!(map_score(&rewards), Some(1.0));
    }

    #[test]
    fn single_relevant_at_rank_one() {
        assert_eq!(map_score(&[1.0, 0.0, 0.0]), Some(1.0));
    }

    #[test]
    fn hand_computed_ndcg_case() {
        // DCG = 1/log2(2) + 0 + 5/log2(4) = 3.5
        // IDCG = 5/log2(2) + 1/log2(3) ≈ 5.630929…
        let rewards = [1.0, 0.0, 5.0];
        let got = ndcg_at_k(&rewards, 3).unwrap();
        let idcg = 5.0 + 1.0 / 3.0_f64.log2();
        let want = 3.5 / idcg;
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.6216).abs() < 5e-4);
    }

    #[test]
    fn hand_computed_map_case() {
        // Relevant at positions 1 and 3: (1/1 + 2/3) / 2.
        let got = map_score(&[1.0, 0.0, 5.0]).unwrap();
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_relevant_items_is_undefined() {
        assert_eq!(map_score(&[0.0, 0.0]), None);
        assert_eq!(ndcg_at_k(&[0.0, 0.0], 2), None);
    }

    #[test]
    fn ndcg_truncates_at_k() {
        // Only the first two ranks count for k = 2.
        let rewards = [0.0, 1.0, 5.0];
        let got = ndcg_at_k(&rewards, 2).unwrap();
        let want = (1.0 / 3.0_f64.log2()) / (5.0 + 1.0 / 3.0_f64.log2());
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_unit_interval() {
        let cases: [&[f64]; 4] = [
            &[5.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 5.0],
            &[1.0],
            &[0.0, 1.0, 0.0, 0.0, 5.0, 1.0, 0.0],
        ];
        for c in cases {
            if let Some(m) = map_score(c) {
                assert!((0.0..=1.0).contains(&m));
            }
            for k in [1, 2, 20, 40] {
                if let Some(n) = ndcg_at_k(c, k) {
                    assert!((0.0..=1.0).contains(&n), "ndcg@{k} = {n} for {c:?}");
                }
            }
        }
    }
}
