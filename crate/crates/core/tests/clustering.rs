use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semflow_core::harness::{eval_clustering, random_partition, ClusteringScores};

fn part(p: &[&str]) -> Vec<Vec<String>> {
    p.iter().map(|c| c.chars().map(|ch| ch.to_string()).collect()).collect()
}

fn close(got: ClusteringScores, want: [f64; 5]) {
    let got_v = [got.pairwise_precision, got.pairwise_recall, got.pairwise_f1, got.ari, got.purity];
    for (g, w) in got_v.iter().zip(want) {
        assert!((g - w).abs() < 1e-9, "got {got:?}, want {want:?}");
    }
}

// [precision, recall, f1, ari, purity], worked out from the contingency
// tables by hand.
#[test]
fn fixed_pairs() {
    close(eval_clustering(&part(&["ab", "cde"]), &part(&["abc", "de"])).unwrap(), [0.5, 0.5, 0.5, 1.0 / 6.0, 0.8]);
    close(eval_clustering(&part(&["ab", "c"]), &part(&["ab", "c"])).unwrap(), [1.0, 1.0, 1.0, 1.0, 1.0]);
    close(eval_clustering(&part(&["a", "b", "c", "d"]), &part(&["abcd"])).unwrap(), [0.0, 0.0, 0.0, 0.0, 1.0]);
    close(eval_clustering(&part(&["abcd"]), &part(&["ab", "cd"])).unwrap(), [1.0 / 3.0, 1.0, 0.5, 0.0, 0.5]);
    close(
        eval_clustering(&part(&["ab", "cd", "ef"]), &part(&["abc", "def"])).unwrap(),
        [2.0 / 3.0, 1.0 / 3.0, 4.0 / 9.0, 8.0 / 33.0, 5.0 / 6.0],
    );
}

#[test]
fn all_singletons_on_both_sides() {
    close(eval_clustering(&part(&["a", "b"]), &part(&["b", "a"])).unwrap(), [1.0, 1.0, 1.0, 1.0, 1.0]);
}

proptest! {
    #[test]
    fn identity_scores_one(seed in any::<u64>(), n in 1usize..40, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_partition(&mut rng, n, k);
        let s = eval_clustering(&t, &t).unwrap();
        prop_assert_eq!(s.pairwise_precision, 1.0);
        prop_assert_eq!(s.pairwise_recall, 1.0);
        prop_assert_eq!(s.pairwise_f1, 1.0);
        prop_assert!((s.ari - 1.0).abs() < 1e-12);
        prop_assert_eq!(s.purity, 1.0);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_partition(&mut rng, n, 6);
        let b = random_partition(&mut rng, n, 6);
        let ab = eval_clustering(&a, &b).unwrap();
        let ba = eval_clustering(&b, &a).unwrap();
        prop_assert!((ab.pairwise_precision - ba.pairwise_recall).abs() < 1e-12);
        prop_assert!((ab.ari - ba.ari).abs() < 1e-12);
        prop_assert!(ab.ari <= 1.0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.purity));
    }
}
