use cwc_core::kmeans::{
    cluster_entropy, entropy_of_counts, kmeans_fit, kmeans_fit_traced, quantize,
};
use cwc_core::prune::{
    prune, prune_to_sparsity, threshold_for_sparsity, zero_count_for, SparsityMask,
};
use cwc_core::PruneError;
use proptest::prelude::*;

fn dense_weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        (1e-6f64..10.0, any::<bool>()).prop_map(|(m, n)| if n { -m } else { m }),
        1..max_len,
    )
}

/// Weights drawn from a handful of magnitudes so ties are common.
fn tied_weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        (1u8..5, any::<bool>()).prop_map(|(m, n)| if n { -f64::from(m) } else { f64::from(m) }),
        1..max_len,
    )
}

proptest! {
    #[test]
    fn prune_hits_exact_zero_count(w in prop_oneof![dense_weights(300), tied_weights(300)], s in 0.0f64..0.99) {
        let expected = zero_count_for(s, w.len()).unwrap();
        prop_assume!(expected < w.len());
        let (pruned, mask) = prune_to_sparsity(&w, s).unwrap();
        prop_assert_eq!(pruned.iter().filter(|&&v| v == 0.0).count(), expected);
        prop_assert_eq!(mask.nonzero_count(), w.len() - expected);
        prop_assert_eq!(mask.bits().iter().filter(|&&b| b).count(), mask.nonzero_count());
        // survivors are untouched and dominate every pruned magnitude
        let kept_min = w.iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(v, _)| v.abs()).fold(f64::INFINITY, f64::min);
        for (i, (&orig, &p)) in w.iter().zip(&pruned).enumerate() {
            if p == 0.0 {
                prop_assert!(orig.abs() <= kept_min, "pruned {i} larger than a survivor");
            } else {
                prop_assert_eq!(p, orig);
            }
        }
    }

    #[test]
    fn ties_break_by_ascending_index(w in tied_weights(100), s in 0.05f64..0.95) {
        let count = zero_count_for(s, w.len()).unwrap();
        prop_assume!(count > 0 && count < w.len());
        let (pruned, _) = prune_to_sparsity(&w, s).unwrap();
        let theta = threshold_for_sparsity(&w, s).unwrap();
        // among entries at the threshold magnitude, the pruned ones come first
        let at: Vec<bool> = w.iter().zip(&pruned).filter(|(v, _)| v.abs() == theta).map(|(_, p)| *p == 0.0).collect();
        prop_assert!(at.windows(2).all(|p| p[0] || !p[1]), "{at:?}");
    }

    #[test]
    fn kmeans_distortion_monotone(points in dense_weights(400), k in 1usize..40, seed in any::<u64>()) {
        let fit = kmeans_fit_traced(&points, k, seed, 100).unwrap();
        for w in fit.distortion_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
        let cb = &fit.codebook;
        cb.validate().unwrap();
        prop_assert_eq!(cb.counts.iter().sum::<usize>(), points.len());
    }

    #[test]
    fn nearest_centroid_assignment(points in dense_weights(300), k in 1usize..30, seed in any::<u64>()) {
        let cb = kmeans_fit(&points, k, seed, 100).unwrap();
        for (&p, &l) in points.iter().zip(&cb.labels) {
            let own = (p - cb.centroids[l as usize]).abs();
            for &c in &cb.centroids {
                prop_assert!(own <= (p - c).abs());
            }
        }
    }

    #[test]
    fn entropy_bounds(points in dense_weights(300), k in 1usize..64, seed in any::<u64>()) {
        let cb = kmeans_fit(&points, k, seed, 50).unwrap();
        let h = cluster_entropy(&cb).unwrap();
        prop_assert!(h >= 0.0 && h <= (k as f64).log2() + 1e-12);
    }

    #[test]
    fn kmeans_is_deterministic(points in dense_weights(200), k in 1usize..20, seed in any::<u64>()) {
        prop_assert_eq!(kmeans_fit(&points, k, seed, 100).unwrap(), kmeans_fit(&points, k, seed, 100).unwrap());
    }

    #[test]
    fn quantize_places_centroids_on_mask(w in dense_weights(200), s in 0.0f64..0.9, k in 1usize..16) {
        prop_assume!(zero_count_for(s, w.len()).unwrap() < w.len());
        let (pruned, mask) = prune_to_sparsity(&w, s).unwrap();
        let cb = kmeans_fit(&mask.gather(&pruned), k, 0, 100).unwrap();
        let q = quantize(&pruned, &mask, &cb).unwrap();
        let mut labels = cb.labels.iter();
        for (i, &keep) in mask.bits().iter().enumerate() {
            if keep {
                prop_assert_eq!(q[i], cb.centroids[*labels.next().unwrap() as usize]);
            } else {
                prop_assert_eq!(q[i], 0.0);
            }
        }
    }
}

#[test]
fn entropy_oracle_values() {
    // uniform over k populated clusters is exactly log2 k
    assert_eq!(entropy_of_counts(&[5, 5, 5, 5]).unwrap(), 2.0);
    // a single cluster carries no information
    assert_eq!(entropy_of_counts(&[9, 0, 0]).unwrap(), 0.0);
    // p = (1/2, 1/4, 1/4) -> 1.5 bits
    assert!((entropy_of_counts(&[2, 1, 1]).unwrap() - 1.5).abs() < 1e-15);
    // an empty cluster keeps the bound strict
    assert!(entropy_of_counts(&[3, 3, 0]).unwrap() < 3f64.log2());
    assert!(entropy_of_counts(&[0, 0]).is_err());
}

#[test]
fn threshold_pruning_examples() {
    let w = [0.1, -0.5, 0.2, 0.9];
    let (p, mask) = prune(&w, 0.2).unwrap();
    assert_eq!(p, vec![0.0, -0.5, 0.0, 0.9]);
    assert_eq!(
        mask,
        SparsityMask::from_bits(vec![false, true, false, true])
    );
    assert_eq!(prune(&w, 1.0), Err(PruneError::PrunedEverything));
    assert!(prune_to_sparsity(&w, 1.0).is_err());
    let (p, _) = prune_to_sparsity(&[1.0, -1.0, 1.0, 2.0], 0.5).unwrap();
    assert_eq!(p, vec![0.0, 0.0, 1.0, 2.0]);
}
