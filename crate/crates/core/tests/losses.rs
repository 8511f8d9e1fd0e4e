mod common;

use common::{central_difference, jaccard_loss_hard, lovasz_integral, max_relative_error, min_error_gap, random_logits, random_mask};
use geofm_bench::losses::{
    cross_entropy, focal_loss, lovasz_softmax_loss, select_loss_by_validation, wce_loss, LossKind, LossRun, LossSpec,
    LovaszClasses,
};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn probs_from(p_ls: &[f64], h: usize, w: usize) -> Array3<f64> {
    Array3::from_shape_fn((h, w, 2), |(i, j, c)| {
        let p = p_ls[i * w + j];
        if c == 1 {
            p
        } else {
            1.0 - p
        }
    })
}

#[test]
fn four_pixel_lovasz_matches_integral_form() {
    let p = [0.9, 0.8, 0.3, 0.1];
    let mask = Array2::from_shape_vec((1, 4), vec![1u8, 1, 0, 0]).unwrap();
    let v = lovasz_softmax_loss(probs_from(&p, 1, 4).view(), mask.view(), LovaszClasses::Present).unwrap();
    // Landslide class: 0.1 * 1 + 0.1 * 2/3 + 0.1 * 1/3 = 0.2.
    // Background: 0.1 * 1 + 0.1 * 2/3 + 0.1 * 1/2 = 13/60.
    assert!((v - 5.0 / 24.0).abs() < 1e-12, "{v}");
    assert!((v - lovasz_integral(&p, mask.as_slice().unwrap())).abs() < 1e-12);
}

#[test]
fn lovasz_single_class_half_iou() {
    // All-landslide mask, half of it predicted.
    let p = [1.0, 1.0, 0.0, 0.0];
    let mask = Array2::from_elem((2, 2), 1u8);
    let v = lovasz_softmax_loss(probs_from(&p, 2, 2).view(), mask.view(), LovaszClasses::Present).unwrap();
    assert!((v - 0.5).abs() < 1e-12);
}

#[test]
fn lovasz_random_soft_instances_match_integral_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mask = random_mask(&mut rng, 4, 5, 0.3);
        let p: Vec<f64> = (0..20).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let v = lovasz_softmax_loss(probs_from(&p, 4, 5).view(), mask.view(), LovaszClasses::Present).unwrap();
        assert!((v - lovasz_integral(&p, mask.as_slice().unwrap())).abs() < 1e-12);
    }
}

#[test]
fn lovasz_all_classes_counts_absent_class() {
    let mask = Array2::from_elem((1, 2), 0u8);
    let p = [0.2, 0.4];
    let present = lovasz_softmax_loss(probs_from(&p, 1, 2).view(), mask.view(), LovaszClasses::Present).unwrap();
    let all = lovasz_softmax_loss(probs_from(&p, 1, 2).view(), mask.view(), LovaszClasses::All).unwrap();
    // Absent landslide class: every pixel is a false alarm, J = 1 throughout.
    assert!((all - (present + 0.4) / 2.0).abs() < 1e-12);
}

#[test]
fn hard_lovasz_is_mean_jaccard_on_every_3x3_case() {
    for truth_bits in 0u32..512 {
        let truth: Vec<u8> = (0..9).map(|i| ((truth_bits >> i) & 1) as u8).collect();
        let mask = Array2::from_shape_vec((3, 3), truth.clone()).unwrap();
        for pred_bits in 0u32..512 {
            let pred: Vec<u8> = (0..9).map(|i| ((pred_bits >> i) & 1) as u8).collect();
            let p: Vec<f64> = pred.iter().map(|&b| b as f64).collect();
            let v = lovasz_softmax_loss(probs_from(&p, 3, 3).view(), mask.view(), LovaszClasses::Present).unwrap();
            assert!((v - jaccard_loss_hard(&pred, &truth)).abs() < 1e-9);
        }
    }
}

fn check_gradients(spec: &LossSpec, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let mask = random_mask(&mut rng, 8, 8, 0.3);
        let z = random_logits(&mut rng, 8, 8, 2.0);
        // Lovász is piecewise linear in the sorted errors; keep the stencil
        // away from order changes.
        if spec.kind == LossKind::Lovasz && min_error_gap(&z, &mask) < 1e-4 {
            continue;
        }
        let (_, g) = spec.value_and_grad(z.view(), mask.view()).unwrap();
        let fd = central_difference(|x| spec.value_and_grad(x.view(), mask.view()).unwrap().0, &z, 1e-4);
        worst = worst.max(max_relative_error(&g, &fd));
        done += 1;
    }
    worst
}

#[test]
fn analytic_gradients_match_central_differences() {
    let cases = [
        LossSpec::wce(),
        LossSpec {
            gamma: 0.0,
            ..LossSpec::focal()
        },
        LossSpec::focal(),
        LossSpec::lovasz(),
    ];
    for (i, spec) in cases.iter().enumerate() {
        let err = check_gradients(spec, 100 + i as u64);
        assert!(err < 1e-4, "{spec:?}: {err}");
    }
}

#[test]
fn reductions_to_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let mask = random_mask(&mut rng, 6, 7, 0.2);
        let z = random_logits(&mut rng, 6, 7, 3.0);
        let ce = cross_entropy(z.view(), mask.view()).unwrap();
        let naive: f64 = z
            .outer_iter()
            .zip(mask.outer_iter())
            .flat_map(|(r, m)| {
                r.outer_iter()
                    .zip(m.iter())
                    .map(|(p, &y)| {
                        let lse = (p[0].exp() + p[1].exp()).ln();
                        lse - p[y as usize]
                    })
                    .collect::<Vec<_>>()
            })
            .sum::<f64>()
            / 42.0;
        assert!((ce - naive).abs() < 1e-7);
        assert!((wce_loss(z.view(), mask.view(), [1.0, 1.0]).unwrap() - ce).abs() < 1e-7);
        assert!((focal_loss(z.view(), mask.view(), 0.0, None).unwrap() - ce).abs() < 1e-7);
    }
}

#[test]
fn loss_selection_table_for_three_losses() {
    let runs: Vec<LossRun> = [LossSpec::wce(), LossSpec::lovasz(), LossSpec::focal()]
        .into_iter()
        .zip([
            (vec![0.9, 0.7, 0.8], vec![0.50, 0.60, 0.70]),
            (vec![0.5, 0.4, 0.45], vec![0.55, 0.66, 0.69]),
            (vec![0.3, 0.2, 0.1], vec![0.52, 0.58, 0.64]),
        ])
        .map(|(spec, (val_loss, val_miou))| LossRun { spec, val_loss, val_miou })
        .collect();
    let sel = select_loss_by_validation(&runs);
    let table: Vec<(LossKind, Option<usize>, Option<f64>)> =
        sel.rows.iter().map(|r| (r.loss.kind, r.checkpoint_epoch, r.val_miou)).collect();
    assert_eq!(
        table,
        vec![
            (LossKind::Wce, Some(2), Some(0.60)),
            (LossKind::Lovasz, Some(2), Some(0.66)),
            (LossKind::Focal, Some(3), Some(0.64)),
        ]
    );
    assert_eq!(sel.winner_row().unwrap().loss.kind, LossKind::Lovasz);
}

fn permute(z: &Array3<f64>, m: &Array2<u8>, perm: &[usize]) -> (Array3<f64>, Array2<u8>) {
    let (h, w, _) = z.dim();
    let zp = Array3::from_shape_fn((h, w, 2), |(i, j, c)| {
        let k = perm[i * w + j];
        z[[k / w, k % w, c]]
    });
    let mp = Array2::from_shape_fn((h, w), |(i, j)| {
        let k = perm[i * w + j];
        m[[k / w, k % w]]
    });
    (zp, mp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn larger_landslide_weight_raises_loss_with_a_missed_landslide(seed in 0u64..10_000, w_ls in 0.5f64..20.0, bump in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = random_mask(&mut rng, 4, 4, 0.3);
        let mut z = random_logits(&mut rng, 4, 4, 2.0);
        mask[[0, 0]] = 1;
        z[[0, 0, 0]] = 1.0;
        z[[0, 0, 1]] = -1.0;
        let lo = wce_loss(z.view(), mask.view(), [2.0, w_ls]).unwrap();
        let hi = wce_loss(z.view(), mask.view(), [2.0, w_ls + bump]).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn focal_loss_strictly_decreases_in_gamma(pt in 0.01f64..0.99, g in 0.0f64..5.0, dg in 0.05f64..3.0) {
        let z = Array3::from_shape_vec((1, 1, 2), vec![0.0, (pt / (1.0 - pt)).ln()]).unwrap();
        let m = Array2::from_elem((1, 1), 1u8);
        let a = focal_loss(z.view(), m.view(), g, None).unwrap();
        let b = focal_loss(z.view(), m.view(), g + dg, None).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn losses_ignore_pixel_order(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = random_mask(&mut rng, 5, 5, 0.3);
        let z = random_logits(&mut rng, 5, 5, 2.0);
        let mut perm: Vec<usize> = (0..25).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let (zp, mp) = permute(&z, &mask, &perm);
        for spec in [LossSpec::wce(), LossSpec::focal(), LossSpec::lovasz()] {
            let a = spec.value_and_grad(z.view(), mask.view()).unwrap().0;
            let b = spec.value_and_grad(zp.view(), mp.view()).unwrap().0;
            if spec.kind == LossKind::Lovasz {
                prop_assert!((a - b).abs() < 1e-12);
            } else {
                prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
    }
}


