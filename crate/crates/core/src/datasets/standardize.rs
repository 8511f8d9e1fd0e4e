use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::patch::Patch;
use super::splits::Split;
use crate::error::{Error, Result};

pub const STD_EPSILON: f64 = 1e-6;

/// Per-channel running moments. `merge` is associative and commutative
/// (Chan et al. pairwise update), so partial results from any partition of
/// the pixel stream combine to the same statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl ChannelMoments {
    pub fn new(channels: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
        }
    }

    pub fn from_patch(patch: &Patch) -> Self {
        let b = patch.bands();
        let mut sum = vec![0.0f64; b];
        let mut n = 0u64;
        for px in patch.image.rows() {
            for (s, &v) in sum.iter_mut().zip(px.iter()) {
                *s += v as f64;
            }
            n += 1;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        let mut m2 = vec![0.0f64; b];
        for px in patch.image.rows() {
            for ((acc, &v), mu) in m2.iter_mut().zip(px.iter()).zip(&mean) {
                let d = v as f64 - mu;
                *acc += d * d;
            }
        }
        Self { count: n, mean, m2 }
    }

    pub fn merge(self, other: Self) -> Self {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let mut mean = Vec::with_capacity(self.mean.len());
        let mut m2 = Vec::with_capacity(self.mean.len());
        for c in 0..self.mean.len() {
            let delta = other.mean[c] - self.mean[c];
            mean.push(self.mean[c] + delta * nb / n as f64);
            m2.push(self.m2[c] + other.m2[c] + delta * delta * na * nb / n as f64);
        }
        Self { count: n, mean, m2 }
    }

    /// Population standard deviation per channel.
    pub fn std(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|m| (m / self.count.max(1) as f64).sqrt())
            .collect()
    }
}

/// Where a standardizer's statistics came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitProvenance {
    pub corpus: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub epsilon: f64,
    pub fitted_on: FitProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitPolicy {
    /// Only the training split may be used (the default for every run).
    #[default]
    TrainOnly,
    /// Explicit override for diagnostics; never set by run configs.
    AllowAnySplit,
}

pub fn fit_standardizer(corpus: &Corpus, split: Split, policy: FitPolicy) -> Result<Standardizer> {
    if split != Split::Train && policy != FitPolicy::AllowAnySplit {
        return Err(Error::Leakage(format!(
            "refusing to fit standardization statistics on the `{split}` split"
        )));
    }
    let ids = corpus.ids(split);
    if ids.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let b = corpus.bands().len();
    let moments = ids
        .par_iter()
        .map(|id| corpus.patch(id).map(|p| ChannelMoments::from_patch(&p)))
        .try_reduce(|| ChannelMoments::new(b), |a, c| Ok(a.merge(c)))?;
    Ok(Standardizer::from_moments(
        &moments,
        FitProvenance {
            corpus: corpus.fingerprint().to_string(),
            split,
        },
    ))
}

impl Standardizer {
    pub fn from_moments(moments: &ChannelMoments, fitted_on: FitProvenance) -> Self {
        let std = moments
            .std()
            .into_iter()
            .map(|s| if s < STD_EPSILON { STD_EPSILON } else { s })
            .collect();
        Self {
            mean: moments.mean.clone(),
            std,
            epsilon: STD_EPSILON,
            fitted_on,
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

/// `(x - mean) / std` per channel; the mask is untouched.
pub fn standardize(patch: &Patch, standardizer: &Standardizer) -> Result<Patch> {
    if patch.bands() != standardizer.channels() {
        return Err(Error::ChannelCount {
            expected: standardizer.channels(),
            actual: patch.bands(),
        });
    }
    let mut out = patch.clone();
    for mut px in out.image.rows_mut() {
        for ((v, mu), sd) in px.iter_mut().zip(&standardizer.mean).zip(&standardizer.std) {
            *v = ((*v as f64 - mu) / sd) as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{BandDescriptor, BandManifest, CorpusOptions, SplitManifest};
    use ndarray::{Array2, Array3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_band_corpus(n: usize, size: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patches: Vec<Patch> = (0..n)
            .map(|i| {
                let image = Array3::from_shape_fn((size, size, 2), |(_, _, c)| {
                    if c == 0 {
                        5.0
                    } else {
                        StandardNormal.sample(&mut rng)
                    }
                });
                Patch::new(format!("p{i}"), image, Array2::zeros((size, size))).unwrap()
            })
            .collect();
        let bands = BandManifest::new(vec![
            BandDescriptor::new("const", 10.0, "x"),
            BandDescriptor::new("noise", 10.0, "x"),
        ])
        .unwrap();
        let splits = SplitManifest {
            train: (0..n).map(|i| format!("p{i}")).collect(),
            ..Default::default()
        };
        let opts = CorpusOptions {
            patch_size: (size, size),
            validate_sample: 4,
        };
        Corpus::in_memory("t", patches, bands, splits, opts).unwrap()
    }

    #[test]
    fn constant_channel_is_floored_and_noise_is_unit() {
        // 16 patches x 250^2 = 10^6 standard-normal pixels: sample mean has
        // sd 1e-3 and sample std sd ~7e-4, well inside the +-0.01 band.
        let c = two_band_corpus(16, 250, 7);
        let s = fit_standardizer(&c, Split::Train, FitPolicy::TrainOnly).unwrap();
        assert_eq!(s.mean[0], 5.0);
        assert_eq!(s.std[0], STD_EPSILON);
        assert!(s.mean[1].abs() <= 0.01, "{}", s.mean[1]);
        assert!((s.std[1] - 1.0).abs() <= 0.01, "{}", s.std[1]);
    }

    #[test]
    fn standardizing_fit_split_gives_zero_mean_unit_std() {
        let c = two_band_corpus(4, 32, 1);
        let s = fit_standardizer(&c, Split::Train, FitPolicy::TrainOnly).unwrap();
        let mut acc = ChannelMoments::new(2);
        for id in c.ids(Split::Train) {
            let p = standardize(&c.patch(id).unwrap(), &s).unwrap();
            acc = acc.merge(ChannelMoments::from_patch(&p));
            // floored constant channel equal to its mean maps to exactly 0
            assert!(p.image.index_axis(ndarray::Axis(2), 0).iter().all(|&v| v == 0.0));
        }
        assert!(acc.mean[1].abs() < 1e-6);
        assert!((acc.std()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn arithmetic_and_identity() {
        let prov = FitProvenance {
            corpus: "x".into(),
            split: Split::Train,
        };
        let s = Standardizer {
            mean: vec![0.0, 5.0],
            std: vec![1.0, 2.0],
            epsilon: STD_EPSILON,
            fitted_on: prov,
        };
        let image = Array3::from_shape_vec((1, 1, 2), vec![3.25, 7.0]).unwrap();
        let p = Patch::new("a", image, Array2::zeros((1, 1))).unwrap();
        let out = standardize(&p, &s).unwrap();
        assert_eq!(out.image[[0, 0, 0]], 3.25);
        assert_eq!(out.image[[0, 0, 1]], 1.0);
        assert_eq!(out.mask, p.mask);

        let wrong = Patch::new("b", Array3::zeros((1, 1, 3)), Array2::zeros((1, 1))).unwrap();
        assert!(matches!(
            standardize(&wrong, &s),
            Err(Error::ChannelCount { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn leakage_guard_and_empty_split() {
        let c = two_band_corpus(2, 8, 2);
        assert!(matches!(
            fit_standardizer(&c, Split::Test, FitPolicy::TrainOnly),
            Err(Error::Leakage(_))
        ));
        assert!(matches!(
            fit_standardizer(&c, Split::Test, FitPolicy::AllowAnySplit),
            Err(Error::EmptySplit(_))
        ));
    }

    #[test]
    fn merge_order_does_not_matter() {
        let c = two_band_corpus(6, 8, 5);
        let parts: Vec<ChannelMoments> = c
            .ids(Split::Train)
            .iter()
            .map(|id| ChannelMoments::from_patch(&c.patch(id).unwrap()))
            .collect();
        let fwd = parts.iter().cloned().fold(ChannelMoments::new(2), ChannelMoments::merge);
        let rev = parts.iter().rev().cloned().fold(ChannelMoments::new(2), ChannelMoments::merge);
        let tree = parts[..3]
            .iter()
            .cloned()
            .fold(ChannelMoments::new(2), ChannelMoments::merge)
            .merge(parts[3..].iter().cloned().fold(ChannelMoments::new(2), ChannelMoments::merge));
        for other in [&rev, &tree] {
            assert_eq!(fwd.count, other.count);
            for ch in 0..2 {
                assert!((fwd.mean[ch] - other.mean[ch]).abs() < 1e-12);
                assert!((fwd.m2[ch] - other.m2[ch]).abs() < 1e-9);
            }
        }
    }
}
