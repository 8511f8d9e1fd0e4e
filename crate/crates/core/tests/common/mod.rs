//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Metrics from a per-pixel double loop, written without the library's
/// confusion-matrix type. Returns
/// `[miou, f1, precision, recall, macc, iou_ls, iou_bg]`.
pub fn brute_force_metrics(pred: &Array2<u8>, truth: &Array2<u8>) -> [f64; 7] {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    let (h, w) = truth.dim();
    for i in 0..h {
        for j in 0..w {
            match (pred[[i, j]], truth[[i, j]]) {
                (1, 1) => tp += 1,
                (1, 0) => fp += 1,
                (0, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
    }
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    let iou_ls = div(tp, tp + fp + fn_);
    let iou_bg = div(tn, tn + fp + fn_);
    [
        (iou_ls + iou_bg) / 2.0,
        f1,
        precision,
        recall,
        div(tp + tn, tp + fp + fn_ + tn),
        iou_ls,
        iou_bg,
    ]
}

pub fn random_mask<R: Rng>(rng: &mut R, h: usize, w: usize, p: f64) -> Array2<u8> {
    Array2::from_shape_fn((h, w), |_| rng.random_bool(p) as u8)
}

pub fn random_logits<R: Rng>(rng: &mut R, h: usize, w: usize, scale: f64) -> Array3<f64> {
    Array3::from_shape_fn((h, w, 2), |_| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Mean over classes present in `truth` of `1 - IoU_c` for a hard
/// prediction.
pub fn jaccard_loss_hard(pred: &[u8], truth: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..2u8 {
        if !truth.contains(&c) {
            continue;
        }
        present += 1;
        let inter = pred.iter().zip(truth).filter(|(p, t)| **p == c && **t == c).count();
        let union = pred.iter().zip(truth).filter(|(p, t)| **p == c || **t == c).count();
        total += 1.0 - inter as f64 / union as f64;
    }
    if present == 0 {
        0.0
    } else {
        total / present as f64
    }
}

/// Jaccard loss of class `c` when the pixels in `wrong` are mispredicted.
fn jaccard_set_loss(wrong: &[bool], truth: &[u8], c: u8) -> f64 {
    let gt = truth.iter().filter(|&&t| t == c).count();
    let missed = wrong.iter().zip(truth).filter(|(w, t)| **w && **t == c).count();
    let false_alarms = wrong.iter().zip(truth).filter(|(w, t)| **w && **t != c).count();
    let union = gt + false_alarms;
    if union == 0 {
        0.0
    } else {
        1.0 - (gt - missed) as f64 / union as f64
    }
}

/// Lovász extension through its threshold-integral form,
/// `f(e) = integral over t in [0, 1] of Delta({i : e_i >= t}) dt`,
/// evaluated exactly on the piecewise-constant intervals. Takes the
/// landslide-class probability per pixel.
pub fn lovasz_integral(p_ls: &[f64], truth: &[u8]) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..2u8 {
        if !truth.contains(&c) {
            continue;
        }
        present += 1;
        let errors: Vec<f64> = p_ls
            .iter()
            .zip(truth)
            .map(|(&p, &t)| {
                let pc = if c == 1 { p } else { 1.0 - p };
                if t == c {
                    1.0 - pc
                } else {
                    pc
                }
            })
            .collect();
        let mut cuts: Vec<f64> = errors.clone();
        cuts.push(0.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let wrong: Vec<bool> = errors.iter().map(|&e| e >= hi).collect();
            total += (hi - lo) * jaccard_set_loss(&wrong, truth, c);
        }
    }
    if present == 0 {
        0.0
    } else {
        total / present as f64
    }
}

/// Central finite differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&Array3<f64>) -> f64, x: &Array3<f64>, step: f64) -> Array3<f64> {
    let mut grad = Array3::zeros(x.dim());
    let mut probe = x.clone();
    for (idx, g) in grad.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let up = f(&probe);
        probe[idx] = orig - step;
        let down = f(&probe);
        probe[idx] = orig;
        *g = (up - down) / (2.0 * step);
    }
    grad
}

/// Largest componentwise `|a - b| / max(|a|, |b|, s)`, where the floor
/// `s = 1e-5 * max |a_i|` keeps components at the float64 round-off level
/// of the difference quotient from dominating.
pub fn max_relative_error(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    let scale = a.iter().chain(b.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-5 * scale;
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Smallest gap between any two Lovász errors of an instance. Both classes
/// share the same error vector in the binary case.
pub fn min_error_gap(logits: &Array3<f64>, truth: &Array2<u8>) -> f64 {
    let mut errors: Vec<f64> = logits
        .outer_iter()
        .zip(truth.outer_iter())
        .flat_map(|(row, trow)| {
            row.outer_iter()
                .zip(trow.iter())
                .map(|(z, &t)| {
                    let p1 = 1.0 / (1.0 + (z[0] - z[1]).exp());
                    if t == 1 {
                        1.0 - p1
                    } else {
                        p1
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    errors.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Plug-in MI with equal-width bins over the observed range.
pub fn binned_mi(x: &[f64], y: &[u8], bins: usize) -> f64 {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut joint = vec![[0.0f64; 2]; bins];
    for (&v, &l) in x.iter().zip(y) {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        joint[b][l as usize] += 1.0;
    }
    let n = x.len() as f64;
    let py = [0, 1].map(|c| joint.iter().map(|j| j[c]).sum::<f64>() / n);
    let mut mi = 0.0;
    for j in &joint {
        let px = (j[0] + j[1]) / n;
        for c in 0..2 {
            let pxy = j[c] / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px * py[c])).ln();
            }
        }
    }
    mi
}
