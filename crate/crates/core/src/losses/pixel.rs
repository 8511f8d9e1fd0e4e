//! Per-pixel loss kernels over flat `[background, landslide]` pairs.
//!
//! Every kernel returns the loss value together with its gradient, averaged
//! over the pixels it receives.

#[inline]
pub(crate) fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

#[inline]
fn log_softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    [z[0] - lse, z[1] - lse]
}

/// Mean of `-w_y * log softmax(z)_y`; gradient w.r.t. logits.
pub(crate) fn wce(logits: &[[f64; 2]], labels: &[u8], w: [f64; 2]) -> (f64, Vec<[f64; 2]>) {
    let n = logits.len().max(1) as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = y as usize;
            let wy = w[y];
            total -= wy * log_softmax2(z)[y];
            let p = softmax2(z);
            let mut g = [wy * p[0] / n, wy * p[1] / n];
            g[y] -= wy / n;
            g
        })
        .collect();
    (total / n, grad)
}

/// Mean of `-a_t (1 - p_t)^gamma log p_t`; gradient w.r.t. logits.
///
/// `alpha` weights the landslide class by `alpha` and background by
/// `1 - alpha`; `None` means unit weights.
pub(crate) fn focal(logits: &[[f64; 2]], labels: &[u8], gamma: f64, alpha: Option<f64>) -> (f64, Vec<[f64; 2]>) {
    let n = logits.len().max(1) as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let y = y as usize;
            let a = match alpha {
                Some(a) if y == 1 => a,
                Some(a) => 1.0 - a,
                None => 1.0,
            };
            let p = softmax2(z);
            let log_pt = log_softmax2(z)[y];
            let pt = p[y];
            // 1 - p_t taken from the other class to keep precision near p_t = 1
            let q = p[1 - y];
            let mod_factor = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
            total -= a * mod_factor * log_pt;
            // p_t * dl/dp_t
            let pt_dl_dpt = if gamma == 0.0 {
                -a
            } else if q == 0.0 {
                0.0
            } else {
                a * (gamma * q.powf(gamma - 1.0) * pt * log_pt - mod_factor)
            };
            let mut g = [0.0; 2];
            for (c, gc) in g.iter_mut().enumerate() {
                let delta = if c == y { 1.0 } else { 0.0 };
                *gc = pt_dl_dpt * (delta - p[c]) / n;
            }
            g
        })
        .collect();
    (total / n, grad)
}

/// Discrete gradient of the Jaccard loss extension for a ground-truth
/// indicator already sorted by decreasing error.
pub(crate) fn lovasz_grad(gt_sorted: &[bool]) -> Vec<f64> {
    let gts: f64 = gt_sorted.iter().filter(|&&g| g).count() as f64;
    let mut cum_gt = 0.0;
    let mut cum_not = 0.0;
    let mut prev = 0.0;
    gt_sorted
        .iter()
        .map(|&g| {
            if g {
                cum_gt += 1.0;
            } else {
                cum_not += 1.0;
            }
            let intersection = gts - cum_gt;
            let union = gts + cum_not;
            let jaccard = 1.0 - intersection / union;
            let d = jaccard - prev;
            prev = jaccard;
            d
        })
        .collect()
}

/// Lovász hinge of the Jaccard loss on probabilities. Returns the value and
/// the gradient w.r.t. the probabilities.
pub(crate) fn lovasz(probs: &[[f64; 2]], labels: &[u8], present_only: bool) -> (f64, Vec<[f64; 2]>) {
    let mut grad = vec![[0.0; 2]; probs.len()];
    let mut total = 0.0;
    let mut counted = 0usize;
    for c in 0..2 {
        let is_c: Vec<bool> = labels.iter().map(|&y| y as usize == c).collect();
        if present_only && !is_c.iter().any(|&b| b) {
            continue;
        }
        counted += 1;
        let errors: Vec<f64> = probs
            .iter()
            .zip(&is_c)
            .map(|(p, &fg)| if fg { 1.0 - p[c] } else { p[c] })
            .collect();
        let mut order: Vec<usize> = (0..errors.len()).collect();
        order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
        let gt_sorted: Vec<bool> = order.iter().map(|&i| is_c[i]).collect();
        let g = lovasz_grad(&gt_sorted);
        for (rank, &i) in order.iter().enumerate() {
            total += errors[i] * g[rank];
            let sign = if is_c[i] { -1.0 } else { 1.0 };
            grad[i][c] += sign * g[rank];
        }
    }
    if counted == 0 {
        return (0.0, grad);
    }
    let k = counted as f64;
    for g in grad.iter_mut() {
        g[0] /= k;
        g[1] /= k;
    }
    (total / k, grad)
}

/// Lovász-Softmax on logits: softmax followed by [`lovasz`], with the
/// gradient chained back through the softmax.
pub(crate) fn lovasz_logits(logits: &[[f64; 2]], labels: &[u8], present_only: bool) -> (f64, Vec<[f64; 2]>) {
    let probs: Vec<[f64; 2]> = logits.iter().map(|&z| softmax2(z)).collect();
    let (value, dprob) = lovasz(&probs, labels, present_only);
    let grad = probs
        .iter()
        .zip(&dprob)
        .map(|(p, d)| {
            // dL/dz_c = sum_k dL/dp_k * p_k (delta_kc - p_c)
            let s = d[0] * p[0] + d[1] * p[1];
            [p[0] * (d[0] - s), p[1] * (d[1] - s)]
        })
        .collect();
    (value, grad)
}
