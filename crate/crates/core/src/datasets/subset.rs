use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::Corpus;
use super::patch::mask_fraction;
use super::splits::Split;
use crate::error::{Error, Result};

pub const DEFAULT_STRATA: usize = 4;

/// A deterministic `k`% subset of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub k: f64,
    pub seed: u64,
    pub ids: Vec<String>,
    #[serde(skip, default = "default_strata")]
    pub n_strata: usize,
}

fn default_strata() -> usize {
    DEFAULT_STRATA
}

impl SubsetSelection {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the serialized manifest.
    pub fn manifest_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn file_name(k: f64, seed: u64) -> String {
        format!("subset_k{k}_seed{seed}.json")
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Target subset size: `round(k * n / 100)`, at least one.
pub fn subset_size(k: f64, n: usize) -> usize {
    round_half_up(k * n as f64 / 100.0).clamp(1, n.max(1))
}

/// Splits the target size across strata: per-stratum quotas `k * |bin| / 100`
/// are floored and the remainder handed out by largest fractional part
/// (ties to the lower stratum), so the total always equals [`subset_size`].
/// Every non-empty stratum keeps at least one draw when the total allows it.
pub fn allocate(bin_sizes: &[usize], k: f64) -> Vec<usize> {
    let n: usize = bin_sizes.iter().sum();
    if n == 0 {
        return vec![0; bin_sizes.len()];
    }
    let target = subset_size(k, n);
    let quotas: Vec<f64> = bin_sizes.iter().map(|&s| k * s as f64 / 100.0).collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(bin_sizes)
        .map(|(q, &s)| (q.floor() as usize).min(s))
        .collect();
    let mut order: Vec<usize> = (0..bin_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    // Largest-remainder pass, repeated in case capacity blocks a bin.
    while assigned < target {
        let before = assigned;
        for &i in &order {
            if assigned == target {
                break;
            }
            if alloc[i] < bin_sizes[i] {
                alloc[i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    while assigned > target {
        let i = (0..alloc.len()).max_by_key(|&i| (alloc[i], usize::MAX - i)).unwrap();
        alloc[i] -= 1;
        assigned -= 1;
    }
    let nonempty = bin_sizes.iter().filter(|&&s| s > 0).count();
    if target >= nonempty {
        for i in 0..alloc.len() {
            if bin_sizes[i] > 0 && alloc[i] == 0 {
                let donor = (0..alloc.len()).max_by_key(|&j| (alloc[j], usize::MAX - j)).unwrap();
                if alloc[donor] > 1 {
                    alloc[donor] -= 1;
                    alloc[i] += 1;
                }
            }
        }
    }
    alloc
}

/// Quantile strata by rank of landslide coverage (ties broken by id).
pub fn strata(fractions: &[(String, f64)], n_strata: usize) -> Vec<Vec<String>> {
    let mut sorted: Vec<&(String, f64)> = fractions.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = sorted.len();
    let n_strata = n_strata.max(1);
    (0..n_strata)
        .map(|b| {
            sorted[b * n / n_strata..(b + 1) * n / n_strata]
                .iter()
                .map(|(id, _)| id.clone())
                .collect()
        })
        .collect()
}

/// Stratified draw over precomputed per-patch coverage fractions.
pub fn stratified_subset_from_fractions(
    fractions: &[(String, f64)],
    k: f64,
    seed: u64,
    n_strata: usize,
) -> Result<SubsetSelection> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(Error::Fraction(k));
    }
    if fractions.is_empty() {
        return Err(Error::EmptySplit(Split::Train.to_string()));
    }
    let bins = strata(fractions, n_strata);
    let sizes: Vec<usize> = bins.iter().map(Vec::len).collect();
    let alloc = allocate(&sizes, k);
    let mut ids = Vec::new();
    for (b, (bin, &take)) in bins.iter().zip(&alloc).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(b as u64);
        for i in index::sample(&mut rng, bin.len(), take) {
            ids.push(bin[i].clone());
        }
    }
    ids.sort();
    Ok(SubsetSelection {
        k,
        seed,
        ids,
        n_strata,
    })
}

pub fn stratified_subset(corpus: &Corpus, k: f64, seed: u64, n_strata: usize) -> Result<SubsetSelection> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(Error::Fraction(k));
    }
    let fractions: Vec<(String, f64)> = corpus
        .ids(Split::Train)
        .par_iter()
        .map(|id| corpus.mask(id).map(|m| (id.clone(), mask_fraction(&m))))
        .collect::<Result<_>>()?;
    stratified_subset_from_fractions(&fractions, k, seed, n_strata)
}
