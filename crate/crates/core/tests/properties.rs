//! Property tests over the crate's structural invariants.

use moon_core::metrics::{auroc, aupr, fpr_at_tpr};
use moon_core::moon::{moon_loss, moon_loss_grad};
use moon_core::network::ProbVector;
use moon_core::rng::SeededRng;
use moon_core::sparsity::{erk_init, prune_grow, BitMatrix, SparsityMethod};
use moon_core::tensor::{softmax_slice, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_shift_invariance(
        logits in prop::collection::vec(-20.0f64..20.0, 2..8),
        shift in -50.0f64..50.0,
    ) {
        let base = softmax_slice(&logits);
        let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
        let moved = softmax_slice(&shifted);
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let sum: f64 = base.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(base.iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn bitmatrix_popcount_tracks_sets(
        rows in 1usize..6,
        cols in 1usize..80,
        flips in prop::collection::vec((0usize..480, prop::bool::ANY), 0..40),
    ) {
        let mut m = BitMatrix::zeros(rows, cols);
        let mut reference = vec![false; rows * cols];
        for (raw, value) in flips {
            let idx = raw % (rows * cols);
            m.set_flat(idx, value);
            reference[idx] = value;
        }
        prop_assert_eq!(m.count_ones(), reference.iter().filter(|&&b| b).count());
    }

    #[test]
    fn prune_grow_preserves_counts_and_zeroes_growth(
        seed in 0u64..1000,
        sparsity in 0.2f64..0.9,
        fraction in 0.0f64..0.9,
        rigl in prop::bool::ANY,
    ) {
        let dims = [(6, 12), (4, 6)];
        let mut rng = SeededRng::new(seed);
        let mut masks = erk_init(&dims, sparsity, &mut rng).unwrap();
        let before: Vec<usize> = masks.iter().map(|m| m.count_ones()).collect();
        let mut weights: Vec<Tensor> = dims
            .iter()
            .map(|&(o, i)| {
                Tensor::new(vec![o, i], (0..o * i).map(|_| rng.next_normal()).collect()).unwrap()
            })
            .collect();
        let grads: Vec<Tensor> = dims
            .iter()
            .map(|&(o, i)| {
                Tensor::new(vec![o, i], (0..o * i).map(|_| rng.next_normal()).collect()).unwrap()
            })
            .collect();
        for l in 0..weights.len() {
            for idx in 0..weights[l].len() {
                if !masks[l].get_flat(idx) {
                    weights[l].data_mut()[idx] = 0.0;
                }
            }
        }
        let masks_before = masks.clone();
        let method = if rigl { SparsityMethod::Rigl } else { SparsityMethod::Set };
        prune_grow(&mut weights, &mut masks, method, fraction, Some(&grads), &mut rng).unwrap();
        let after: Vec<usize> = masks.iter().map(|m| m.count_ones()).collect();
        prop_assert_eq!(before, after);
        for l in 0..weights.len() {
            for idx in 0..weights[l].len() {
                // grown weights start at zero, masked weights stay zero
                let grown = masks[l].get_flat(idx) && !masks_before[l].get_flat(idx);
                if grown || !masks[l].get_flat(idx) {
                    prop_assert_eq!(weights[l].data()[idx], 0.0);
                }
            }
        }
    }

    #[test]
    fn rank_metrics_are_monotone_transform_invariant(
        id in prop::collection::vec(-5.0f64..5.0, 1..40),
        ood in prop::collection::vec(-5.0f64..5.0, 1..40),
    ) {
        let t = |v: &[f64]| v.iter().map(|&x| 2.0 * x + 1.0).collect::<Vec<_>>();
        let (ti, to) = (t(&id), t(&ood));
        prop_assert!((auroc(&id, &ood).unwrap() - auroc(&ti, &to).unwrap()).abs() < 1e-12);
        prop_assert!(
            (fpr_at_tpr(&id, &ood, 0.95).unwrap() - fpr_at_tpr(&ti, &to, 0.95).unwrap()).abs()
                < 1e-12
        );
        prop_assert!((aupr(&id, &ood).unwrap() - aupr(&ti, &to).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn moon_loss_monotone_in_w_and_grad_consistent(
        logits in prop::collection::vec(-4.0f64..4.0, 3..6),
        w1 in 0.0f64..3.0,
        dw in 0.0f64..2.0,
    ) {
        let k = logits.len() - 1;
        let probs = ProbVector::from_logits(&logits);
        let y = 1;
        let y_hat = 2;
        let l1 = moon_loss(&probs, k, y, y_hat, w1).unwrap();
        let l2 = moon_loss(&probs, k, y, y_hat, w1 + dw).unwrap();
        prop_assert!(l2 >= l1 - 1e-12);

        // gradient matches central differences at one random coordinate
        let g = moon_loss_grad(&probs, k, y, y_hat, w1, false).unwrap();
        let h = 1e-5;
        for j in 0..logits.len() {
            let mut zp = logits.clone();
            zp[j] += h;
            let mut zm = logits.clone();
            zm[j] -= h;
            let fd = (moon_loss(&ProbVector::from_logits(&zp), k, y, y_hat, w1).unwrap()
                - moon_loss(&ProbVector::from_logits(&zm), k, y, y_hat, w1).unwrap())
                / (2.0 * h);
            let a = g.data()[j];
            prop_assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1.0) < 1e-6);
        }
    }
}
