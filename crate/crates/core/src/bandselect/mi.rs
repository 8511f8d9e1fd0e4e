use indexmap::IndexMap;
use ndarray::ArrayView1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::sample::MISample;
use crate::datasets::BandConfig;
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIReport {
    /// Score per band in nats, in manifest order.
    pub scores: IndexMap<String, f64>,
    /// Band names by descending score; ties keep manifest order.
    pub ranking: Vec<String>,
    pub k_neighbors: usize,
    pub seed: u64,
    /// Whether the sample was standardized before estimation.
    pub standardized: bool,
}

impl MIReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Largest double strictly below a positive `d`.
fn shrink(d: f64) -> f64 {
    if d > 0.0 {
        f64::from_bits(d.to_bits() - 1)
    } else {
        0.0
    }
}

/// Distance from `s[j]` to its `k`-th nearest neighbour in the sorted slice.
fn kth_distance(s: &[f64], j: usize, k: usize) -> f64 {
    let (mut lo, mut hi) = (j, j + 1);
    let mut d = 0.0;
    for _ in 0..k {
        let left = (lo > 0).then(|| s[j] - s[lo - 1]);
        let right = (hi < s.len()).then(|| s[hi] - s[j]);
        d = match (left, right) {
            (Some(l), Some(r)) if l <= r => {
                lo -= 1;
                l
            }
            (Some(l), None) => {
                lo -= 1;
                l
            }
            (_, Some(r)) => {
                hi += 1;
                r
            }
            (None, None) => break,
        };
    }
    d
}

/// Points of the sorted slice within `r` of `x` (inclusive).
fn count_within(sorted: &[f64], x: f64, r: f64) -> usize {
    let lo = sorted.partition_point(|&v| v < x && x - v > r);
    let hi = sorted.partition_point(|&v| v <= x || v - x <= r);
    hi - lo
}

/// kNN estimate of I(X; Y) for one continuous channel and a binary label.
///
/// The channel is scaled to unit standard deviation and jittered by noise of
/// relative size 1e-10 before estimation. Rows whose class has a single
/// member are ignored. The result is clamped at zero.
pub fn mi_channel(x: ArrayView1<f64>, labels: &[u8], k: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = x.len();
    let mean = x.sum() / n as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if std > 0.0 { std } else { 1.0 };
    let mut v: Vec<f64> = x.iter().map(|&a| a / scale).collect();
    let amp = 1e-10 * (v.iter().map(|a| a.abs()).sum::<f64>() / n as f64).max(1.0);
    for a in v.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *a += amp * e;
    }

    let mut radius = vec![0.0; n];
    let mut k_eff = vec![0usize; n];
    let mut class_size = vec![0usize; n];
    let mut keep = vec![false; n];
    for class in 0..2u8 {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let count = members.len();
        if count < 2 {
            continue;
        }
        let kc = k.min(count - 1);
        let mut order = members.clone();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| v[i]).collect();
        for (j, &i) in order.iter().enumerate() {
            radius[i] = kth_distance(&sorted, j, kc);
            k_eff[i] = kc;
            class_size[i] = count;
            keep[i] = true;
        }
    }
    let rows: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    if rows.is_empty() {
        return 0.0;
    }
    let mut all: Vec<f64> = rows.iter().map(|&i| v[i]).collect();
    all.sort_by(f64::total_cmp);
    let m = rows.len() as f64;
    let mut psi_k = 0.0;
    let mut psi_ny = 0.0;
    let mut psi_m = 0.0;
    for &i in &rows {
        let within = count_within(&all, v[i], shrink(radius[i]));
        psi_k += digamma(k_eff[i] as f64);
        psi_ny += digamma(class_size[i] as f64);
        psi_m += digamma(within as f64);
    }
    let mi = digamma(m) + psi_k / m - psi_ny / m - psi_m / m;
    mi.max(0.0)
}

/// Scores every channel of `sample`; channels are evaluated in parallel,
/// each with its own jitter stream derived from `seed`.
pub fn estimate_mi(sample: &MISample, k_neighbors: usize, seed: u64) -> Result<MIReport> {
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    let positives = sample.labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == sample.len() {
        return Err(Error::DegenerateLabel);
    }
    if let Some(&bad) = sample.labels.iter().find(|&&y| y > 1) {
        return Err(Error::LabelDomain {
            id: "mi-sample".into(),
            value: bad,
        });
    }
    if sample.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape("feature matrix contains non-finite values".into()));
    }
    let scores: Vec<f64> = (0..sample.features.ncols())
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            mi_channel(sample.features.column(b), &sample.labels, k_neighbors, &mut rng)
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(MIReport {
        scores: sample.band_names.iter().cloned().zip(scores).collect(),
        ranking: order.iter().map(|&i| sample.band_names[i].clone()).collect(),
        k_neighbors,
        seed,
        standardized: false,
    })
}

/// The `k` best-ranked channels, best first.
pub fn top_k_config(report: &MIReport, k: usize, name: &str) -> Result<BandConfig> {
    if k == 0 || k > report.ranking.len() {
        return Err(Error::Config(format!(
            "cannot select {k} of {} channels",
            report.ranking.len()
        )));
    }
    BandConfig::new(name, &report.ranking[..k])
}
