//! Property tests for the distribution and model invariants.

use proptest::prelude::*;

use sjd_core::decoder::{verify_window, DecodeConfig, DraftSlot};
use sjd_core::model::{shape_distribution, Model, ModelSpec};
use sjd_core::oracle::one_step_marginal;
use sjd_core::rng::SplitMix64;
use sjd_core::spatial_init::GridGeom;
use sjd_core::Distribution;

fn finite_logits(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0..20.0f64, len..=len)
}

fn weights(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..1.0f64, len..=len)
}

fn normalize(w: Vec<f64>) -> Distribution {
    let sum: f64 = w.iter().sum();
    Distribution::new(w.into_iter().map(|x| x / sum).collect())
}

proptest! {
    #[test]
    fn shaped_distributions_are_normalized_with_bounded_support(
        logits in (2usize..24).prop_flat_map(finite_logits),
        temperature in 0.1..4.0f64,
        k in 1usize..24,
    ) {
        let d = shape_distribution(&logits, temperature, k);
        let sum: f64 = d.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
        let nonzero = d.probs().iter().filter(|&&p| p > 0.0).count();
        prop_assert!(nonzero <= k);
    }

    #[test]
    fn entropy_is_nonincreasing_as_k_shrinks(
        logits in (3usize..16).prop_flat_map(finite_logits),
        temperature in 0.2..3.0f64,
    ) {
        let v = logits.len();
        let mut previous = f64::INFINITY;
        for k in (1..=v).rev() {
            let h = shape_distribution(&logits, temperature, k).entropy();
            prop_assert!(h <= previous + 1e-12, "entropy rose from {previous} to {h} at k={k}");
            previous = h;
        }
        prop_assert_eq!(shape_distribution(&logits, temperature, 1).entropy(), 0.0);
    }

    #[test]
    fn one_step_marginal_recovers_the_new_distribution(
        w_ref in (2usize..32).prop_flat_map(weights),
        scale in 0.1..10.0f64,
    ) {
        let len = w_ref.len();
        let d_ref = normalize(w_ref.clone());
        // Perturb multiplicatively so the pair is correlated but distinct.
        let w_new: Vec<f64> = w_ref.iter().enumerate()
            .map(|(i, &x)| x * (1.0 + scale * (i as f64 / len as f64)))
            .collect();
        let d_new = normalize(w_new);
        let marginal = one_step_marginal(&d_ref, &d_new);
        for (m, n) in marginal.probs().iter().zip(d_new.probs()) {
            prop_assert!((m - n).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_window_is_causally_consistent(
        seed in any::<u64>(),
        sharpness in 0.0..8.0f64,
        context_len in 1usize..4,
        split in 1usize..5,
    ) {
        let model = Model::build(ModelSpec::hash_logit(8, context_len, sharpness, seed)).unwrap();
        let config = DecodeConfig { top_k: 5, ..DecodeConfig::default() };
        let draft = [3u32, 1, 7, 2, 5];
        let full = model.eval_window(&[4, 0], &draft, &config).unwrap();
        let partial = model.eval_window(&[4, 0], &draft[..split], &config).unwrap();
        prop_assert_eq!(&full[..split], &partial[..]);
    }

    #[test]
    fn equal_reference_and_fresh_distributions_always_accept(
        w in (2usize..16).prop_flat_map(weights),
        seed in any::<u64>(),
    ) {
        let d = normalize(w);
        let drafts: Vec<DraftSlot> = d
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(t, _)| DraftSlot { token: t as u32, ref_dist: d.clone() })
            .collect();
        let dists = vec![d.clone(); drafts.len()];
        let mut rng = SplitMix64::new(seed);
        let outcome = verify_window(&drafts, &dists, &mut rng);
        prop_assert_eq!(outcome.rejected_at, None);
        prop_assert_eq!(outcome.accepted_count, drafts.len());
    }

    #[test]
    fn raster_indexing_round_trips(h in 1usize..20, w in 1usize..20) {
        let geom = GridGeom::new(h, w);
        for i in 0..geom.len() {
            let (r, c) = geom.index_to_rc(i).unwrap();
            prop_assert!(r < h && c < w);
            prop_assert_eq!(geom.rc_to_index(r, c).unwrap(), i);
        }
    }
}
