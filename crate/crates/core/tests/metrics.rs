mod common;

use common::{brute_force_metrics, random_mask};
use geofm_bench::error::Error;
use geofm_bench::metrics::{
    accumulate, efficiency_report, segmentation_metrics, transfer_report, ConfusionMatrix,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report_fields(cm: &ConfusionMatrix) -> [f64; 7] {
    let r = segmentation_metrics(cm).unwrap();
    [r.miou, r.f1, r.precision, r.recall, r.macc, r.iou_ls, r.iou_bg]
}

#[test]
fn matches_per_pixel_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..1000 {
        let h = rng.random_range(1..=32);
        let w = rng.random_range(1..=32);
        let p = rng.random_range(0.0..1.0);
        let truth = random_mask(&mut rng, h, w, p);
        let q = rng.random_range(0.0..1.0);
        let pred = random_mask(&mut rng, h, w, q);
        let cm = ConfusionMatrix::from_masks(pred.view(), truth.view()).unwrap();
        let got = report_fields(&cm);
        let want = brute_force_metrics(&pred, &truth);
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() <= 1e-12, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn accumulate_leaves_input_untouched() {
    let truth = Array2::from_shape_fn((4, 4), |(i, j)| (i == 0 && j < 3) as u8);
    let zero = ConfusionMatrix::default();
    let same = accumulate(&zero, truth.view(), truth.view()).unwrap();
    assert_eq!(same, ConfusionMatrix::new(3, 0, 0, 13));
    let inverse = truth.mapv(|v| 1 - v);
    let flipped = accumulate(&zero, inverse.view(), truth.view()).unwrap();
    assert_eq!(flipped, ConfusionMatrix::new(0, 13, 3, 0));
    assert_eq!(zero, ConfusionMatrix::default());
    let odd = Array2::from_elem((4, 4), 2u8);
    assert!(matches!(accumulate(&zero, odd.view(), truth.view()), Err(Error::LabelDomain { .. })));
}

#[test]
fn sixteen_by_sixteen_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = random_mask(&mut rng, 16, 16, 0.2);
    let pred = random_mask(&mut rng, 16, 16, 0.3);
    let cm = ConfusionMatrix::from_masks(pred.view(), truth.view()).unwrap();
    let mut counts = [0u64; 4];
    for (p, t) in pred.iter().zip(truth.iter()) {
        counts[(*p as usize) * 2 + *t as usize] += 1;
    }
    assert_eq!(cm, ConfusionMatrix::new(counts[3], counts[2], counts[1], counts[0]));
}

#[test]
fn efficiency_from_quoted_scores() {
    let r = efficiency_report(&[(100.0, 70.41), (1.25, 66.96)]).unwrap();
    assert!((r.rpd_at(1.25).unwrap() - 0.0490).abs() < 1e-3);
    assert_eq!(r.rpd_at(100.0), Some(0.0));
}

#[test]
fn efficiency_from_quoted_retentions() {
    let r = efficiency_report(&[(100.0, 1.0), (10.0, 0.9787), (2.5, 0.9524), (1.25, 0.9510)]).unwrap();
    let de = r.de.unwrap();
    assert!((de - 0.9607).abs() < 5e-5, "{de}");
    // The narrative figure of about 0.97 is not what these retentions give.
    assert!((de - 0.97).abs() > 5e-3);
}

#[test]
fn transfer_from_quoted_scores() {
    let t = transfer_report(71.18, 86.03, 70.75).unwrap();
    assert!((t.r_site - 1.2086).abs() < 1e-3);
    assert!((t.r_2hop - 0.9940).abs() < 1e-3);
    assert!((t.r_ext - 0.8224).abs() < 1e-3);
    assert!(matches!(transfer_report(0.0, 1.0, 1.0), Err(Error::RatioDomain(_))));
}

#[test]
fn negative_drop_is_allowed() {
    let r = efficiency_report(&[(100.0, 50.0), (10.0, 50.535)]).unwrap();
    assert!((r.rpd_at(10.0).unwrap() + 0.0107).abs() < 1e-9);
}

fn cm_strategy() -> impl Strategy<Value = ConfusionMatrix> {
    (0u64..500, 0u64..500, 0u64..500, 0u64..500).prop_map(|(a, b, c, d)| ConfusionMatrix::new(a, b, c, d))
}

proptest! {
    #[test]
    fn merge_order_does_not_matter(tiles in prop::collection::vec(cm_strategy(), 1..12), seed in any::<u64>()) {
        let left: ConfusionMatrix = tiles.iter().fold(ConfusionMatrix::default(), |a, b| a.merge(*b));
        let mut shuffled = tiles.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        // Pairwise tree reduction.
        while shuffled.len() > 1 {
            shuffled = shuffled.chunks(2).map(|c| c.iter().fold(ConfusionMatrix::default(), |a, b| a.merge(*b))).collect();
        }
        prop_assert_eq!(left, shuffled[0]);
        prop_assert_eq!(left, tiles.iter().copied().sum::<ConfusionMatrix>());
    }

    #[test]
    fn report_fields_are_bounded_and_consistent(cm in cm_strategy()) {
        prop_assume!(cm.total() > 0);
        let r = segmentation_metrics(&cm).unwrap();
        for v in [r.miou, r.f1, r.precision, r.recall, r.macc, r.iou_ls, r.iou_bg, r.mean_class_acc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((r.miou - (r.iou_ls + r.iou_bg) / 2.0).abs() < 1e-15);
        if r.precision + r.recall > 0.0 {
            let hm = 2.0 * r.precision * r.recall / (r.precision + r.recall);
            prop_assert!((r.f1 - hm).abs() < 1e-12);
        }
    }

    #[test]
    fn ratios_are_scale_invariant(
        base in 1.0f64..100.0,
        scores in prop::collection::vec(0.0f64..100.0, 3),
        c in 0.01f64..100.0,
    ) {
        let ks = [10.0, 2.5, 1.25];
        let mut pairs = vec![(100.0, base)];
        pairs.extend(ks.iter().copied().zip(scores.iter().copied()));
        let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(k, p)| (k, p * c)).collect();
        let a = efficiency_report(&pairs).unwrap();
        let b = efficiency_report(&scaled).unwrap();
        for k in ks {
            prop_assert!((a.rpd_at(k).unwrap() - b.rpd_at(k).unwrap()).abs() < 1e-12);
            prop_assert!(a.rpd_at(k).unwrap() <= 1.0);
        }
        prop_assert!((a.de.unwrap() - b.de.unwrap()).abs() < 1e-12);

        let t = transfer_report(base, scores[0] + 1.0, scores[1]).unwrap();
        let u = transfer_report(base * c, (scores[0] + 1.0) * c, scores[1] * c).unwrap();
        prop_assert!((t.r_site - u.r_site).abs() < 1e-12);
        prop_assert!((t.r_ext - u.r_ext).abs() < 1e-12);
        prop_assert!((t.r_2hop - u.r_2hop).abs() < 1e-12);
        prop_assert!((t.r_2hop - t.r_site * t.r_ext).abs() < 1e-12);
    }
}
