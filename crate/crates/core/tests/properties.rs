//! Property-based invariants over randomly shaped inputs.

use chtf::decomposition::{m_mode_svd, rank_one_approx, reconstruct};
use chtf::hierarchy::{chtf_als, make_segmentation_bank, segment_tensor, ChtfOptions};
use chtf::io::{parse_tnsr, write_tnsr};
use chtf::random::{gaussian_tensor, seeded, unit_vec};
use chtf::recognition::{auc, preprocess, roc_curve, ClaheOptions};
use chtf::tensor::{frobenius_norm, matrixize, mode_product, outer, unmatrixize};
use chtf::{DenseTensor, Matrix};
use proptest::prelude::*;

fn dims_strategy(max_order: usize, max_extent: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_extent, 1..=max_order)
}

fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    frobenius_norm(&a.sub(b).unwrap()) / frobenius_norm(b).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrixize_round_trips(dims in dims_strategy(4, 5), seed in any::<u64>(), mode_pick in 0usize..4) {
        let t = gaussian_tensor(&mut seeded(seed), &dims);
        let mode = mode_pick % dims.len();
        let m = matrixize(&t, mode).unwrap();
        prop_assert_eq!(m.shape(), (dims[mode], t.len() / dims[mode]));
        prop_assert_eq!(unmatrixize(&m, mode, &dims).unwrap(), t);
    }

    #[test]
    fn mode_products_compose(dims in dims_strategy(4, 4), seed in any::<u64>(), mode_pick in 0usize..4, j in 1usize..4, k in 1usize..4) {
        let mut r = seeded(seed);
        let t = gaussian_tensor(&mut r, &dims);
        let mode = mode_pick % dims.len();
        let a = Matrix::from_fn(j, dims[mode], |_, _| unit_vec(&mut r, 1)[0]);
        let b = Matrix::from_fn(k, j, |i, c| (i + 2 * c) as f64 - 1.5);
        let lhs = mode_product(&mode_product(&t, mode, &a).unwrap(), mode, &b).unwrap();
        let rhs = mode_product(&t, mode, &(&b * &a)).unwrap();
        prop_assert!(rel(&lhs, &rhs) <= 1e-12);
        let id = mode_product(&t, mode, &Matrix::identity(dims[mode], dims[mode])).unwrap();
        prop_assert_eq!(id, t);
    }

    #[test]
    fn m_mode_svd_is_exact_and_orthonormal(dims in dims_strategy(4, 5), seed in any::<u64>()) {
        let d = gaussian_tensor(&mut seeded(seed), &dims);
        let m = m_mode_svd(&d).unwrap();
        prop_assert!(rel(&reconstruct(&m).unwrap(), &d) <= 1e-10);
        let inv = m.invariants();
        prop_assert!(inv.orthonormality <= 1e-10);
        prop_assert!(inv.slab_order);
        prop_assert!(inv.all_orthogonality <= 1e-8);
    }

    #[test]
    fn tnsr_round_trips(dims in dims_strategy(5, 4), seed in any::<u64>()) {
        let t = gaussian_tensor(&mut seeded(seed), &dims);
        let mut buf = Vec::new();
        write_tnsr(&mut buf, &t).unwrap();
        prop_assert_eq!(buf.len(), 8 + 8 * dims.len() + 8 * t.len());
        prop_assert_eq!(parse_tnsr(&buf).unwrap(), t);
    }

    #[test]
    fn segmentation_partition_sums_bit_exactly(n in 2usize..20, cuts in prop::collection::vec(any::<u16>(), 0..4), seed in any::<u64>()) {
        let mut bounds: Vec<usize> = cuts.iter().map(|c| 1 + (*c as usize) % (n - 1)).collect();
        bounds.push(0);
        bounds.push(n);
        bounds.sort_unstable();
        bounds.dedup();
        let regions: Vec<Vec<usize>> = bounds.windows(2).map(|w| (w[0]..w[1]).collect()).collect();
        let bank = make_segmentation_bank(n, &regions).unwrap();
        prop_assert!(bank.is_partition());
        let d = gaussian_tensor(&mut seeded(seed), &[n, 3, 2]);
        let mut sum = DenseTensor::zeros(d.dims()).unwrap();
        for s in 0..bank.len() {
            sum.add_assign(&segment_tensor(&d, &bank, s).unwrap()).unwrap();
        }
        prop_assert_eq!(sum, d);
    }

    #[test]
    fn rank_one_factors_are_recovered(dims in prop::collection::vec(2usize..6, 2..=4), seed in any::<u64>()) {
        let mut r = seeded(seed);
        let vs: Vec<Vec<f64>> = dims.iter().map(|&n| unit_vec(&mut r, n)).collect();
        let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        let t = outer(&refs).unwrap().scale(2.5);
        let f = rank_one_approx(&t, 100, 1e-14).unwrap();
        prop_assert!((f.scale - 2.5).abs() <= 1e-9);
        for (got, want) in f.vectors.iter().zip(&vs) {
            let c: f64 = got.iter().zip(want).map(|(a, b)| a * b).sum();
            prop_assert!(c.abs() >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn chtf_als_never_increases_the_loss(seed in any::<u64>(), split in 1usize..5, r1 in 1usize..4, r2 in 1usize..3) {
        let d = gaussian_tensor(&mut seeded(seed), &[6, 4, 3]);
        let bank = make_segmentation_bank(6, &[(0..split + 1).collect(), (split..6).collect()]).unwrap();
        let opts = ChtfOptions { max_iters: 8, tol: Some(1e-300), center: false };
        let (_, trace) = chtf_als(&d, &bank, &[None, Some(2 * r1), Some(2 * r2)], &opts).unwrap();
        prop_assert!(trace.is_non_increasing(1e-9), "{:?}", trace.values);
    }

    #[test]
    fn roc_is_monotone_and_auc_bounded(scores in prop::collection::vec(-1.0f64..1.0, 1..40), labels in prop::collection::vec(any::<bool>(), 40)) {
        let same = &labels[..scores.len()];
        let roc = roc_curve(&scores, same);
        prop_assert!(roc.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
        let a = auc(&roc);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn clahe_output_stays_in_unit_range(w in 2usize..10, h in 2usize..10, tx in 1usize..3, ty in 1usize..3, seed in any::<u64>()) {
        let img = gaussian_tensor(&mut seeded(seed), &[w * h]).into_data();
        let opts = ClaheOptions { width: w, height: h, tiles_x: tx, tiles_y: ty, clip_limit: 2.0, bins: 16 };
        let out = preprocess(&img, &opts).unwrap();
        prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(preprocess(&img, &opts).unwrap(), out);
    }
}
