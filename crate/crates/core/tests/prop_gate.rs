//! The acceptance rule checked against a direct statement of its
//! biconditional: target strictly improves, and every non-target cluster
//! stays within epsilon of its before-score.

use std::collections::BTreeMap;

use proptest::prelude::*;

use specforge_core::gate::{gate_ok, GateScores};

/// Score maps over a shared cluster set. Scores are drawn from a coarse
/// grid so exact ties and exact-epsilon boundaries occur often.
fn arb_score_pair() -> impl Strategy<Value = (GateScores, GateScores, String, f64)> {
    (1usize..=6)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0..=20u8, n),
                prop::collection::vec(0..=20u8, n),
                0..n,
                prop::sample::select(vec![0.0, 0.01, 0.05, 0.25, 1.0]),
            )
        })
        .prop_map(|(before, after, target_idx, epsilon)| {
            let to_scores = |values: &[u8]| {
                let per_cluster: BTreeMap<String, f64> = values
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (format!("c{i}"), f64::from(v) / 20.0))
                    .collect();
                let overall =
                    per_cluster.values().sum::<f64>() / per_cluster.len() as f64;
                GateScores {
                    per_cluster,
                    overall,
                }
            };
            (
                to_scores(&before),
                to_scores(&after),
                format!("c{target_idx}"),
                epsilon,
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn gate_matches_direct_biconditional(
        (before, after, target, epsilon) in arb_score_pair()
    ) {
        let expected = after.per_cluster[&target] > before.per_cluster[&target]
            && before.per_cluster.iter().all(|(cluster, b)| {
                cluster == &target || after.per_cluster[cluster] >= b - epsilon
            });
        let got = gate_ok(&before, &after, &target, epsilon).expect("same clusters");
        prop_assert_eq!(got, expected);
    }

    /// With epsilon = 1 every regression is tolerated, so acceptance reduces
    /// to strict target improvement alone.
    #[test]
    fn full_tolerance_reduces_to_target_improvement(
        (before, after, target, _) in arb_score_pair()
    ) {
        let got = gate_ok(&before, &after, &target, 1.0).expect("same clusters");
        prop_assert_eq!(
            got,
            after.per_cluster[&target] > before.per_cluster[&target]
        );
    }

    /// Dropping a cluster from one side is always an error, never a decision.
    #[test]
    fn mismatched_cluster_sets_error(
        (before, mut after, target, epsilon) in arb_score_pair()
    ) {
        let extra = "zz_extra".to_string();
        after.per_cluster.insert(extra, 0.5);
        prop_assert!(gate_ok(&before, &after, &target, epsilon).is_err());
    }
}
