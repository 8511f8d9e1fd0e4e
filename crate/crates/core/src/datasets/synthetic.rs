//! Synthetic stand-in for the Landslide4Sense stack.
//!
//! Every patch carries 14 channels in the Landslide4Sense order. Channels
//! share a few smooth random fields (so they are spectrally correlated), add
//! i.i.d. noise, and only the configured signal bands are shifted inside
//! landslide blobs. Masks are unions of random ellipses and are rare: a
//! quarter of the patches hold no landslide pixel at all.

use std::f32::consts::PI;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bands::BandManifest;
use super::corpus::{Corpus, CorpusOptions};
use super::patch::Patch;
use super::splits::{Split, SplitManifest};
use crate::error::Result;

const FIELDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub size: usize,
    pub seed: u64,
    /// Band names whose values shift inside landslide pixels.
    pub signal_bands: Vec<String>,
    /// Shift magnitude in units of the band's texture scale.
    pub signal_strength: f32,
    pub noise: f32,
    pub max_blobs: usize,
    pub empty_rate: f64,
    /// Global offset/contrast change applied to every band (domain shift).
    pub domain_shift: f32,
    pub site: Option<String>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 128,
            seed: 0,
            signal_bands: vec!["B4".into(), "B8".into(), "slope".into()],
            signal_strength: 1.5,
            noise: 0.3,
            max_blobs: 3,
            empty_rate: 0.25,
            domain_shift: 0.0,
            site: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub generalizability: usize,
    pub external: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
            Split::Generalizability => self.generalizability,
            Split::External => self.external,
        }
    }

    pub fn total(&self) -> usize {
        Split::ALL.iter().map(|&s| self.get(s)).sum()
    }
}

/// Per-band radiometry, fixed for a corpus seed.
struct BandModel {
    base: f32,
    scale: f32,
    mix: [f32; FIELDS],
    signal: f32,
}

fn band_models(manifest: &BandManifest, spec: &SyntheticSpec) -> Vec<BandModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_ba4d);
    manifest
        .bands()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (base, scale) = match b.name.as_str() {
                "DEM" => (1500.0, 300.0),
                "slope" => (25.0, 8.0),
                _ => (0.05 + 0.015 * i as f32, 0.04),
            };
            let mut mix = [0.0; FIELDS];
            for m in mix.iter_mut() {
                *m = rng.random_range(-1.0..1.0);
            }
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let signal = if spec.signal_bands.iter().any(|s| s == &b.name) {
                sign * spec.signal_strength
            } else {
                0.0
            };
            BandModel {
                base,
                scale,
                mix,
                signal,
            }
        })
        .collect()
}

fn smooth_field(rng: &mut ChaCha8Rng, size: usize) -> Array2<f32> {
    let waves: Vec<(f32, f32, f32)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..3.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let n = size as f32;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let (x, y) = (j as f32 / n, i as f32 / n);
        waves
            .iter()
            .map(|(u, v, ph)| (2.0 * PI * (u * x + v * y) + ph).sin())
            .sum::<f32>()
            / (1.5f32).sqrt()
    })
}

fn blob_mask(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Array2<u8> {
    let size = spec.size;
    let mut mask = Array2::<u8>::zeros((size, size));
    if spec.max_blobs == 0 || rng.random_bool(spec.empty_rate) {
        return mask;
    }
    let n = size as f32;
    let blobs = rng.random_range(1..=spec.max_blobs);
    for _ in 0..blobs {
        let cx = rng.random_range(0.0..n);
        let cy = rng.random_range(0.0..n);
        let ra = rng.random_range(0.06..0.16) * n;
        let rb = rng.random_range(0.06..0.16) * n;
        let theta: f32 = rng.random_range(0.0..PI);
        let (s, c) = theta.sin_cos();
        for ((i, j), m) in mask.indexed_iter_mut() {
            let (dx, dy) = (j as f32 + 0.5 - cx, i as f32 + 0.5 - cy);
            let u = (dx * c + dy * s) / ra;
            let v = (-dx * s + dy * c) / rb;
            if u * u + v * v <= 1.0 {
                *m = 1;
            }
        }
    }
    mask
}

/// Generates one patch per id; patch `i` depends only on `(spec, i)`.
pub fn synthetic_patches(manifest: &BandManifest, spec: &SyntheticSpec, ids: &[String]) -> Vec<Patch> {
    let models = band_models(manifest, spec);
    let b = manifest.len();
    let contrast = 1.0 + 0.5 * spec.domain_shift;
    ids.iter()
        .enumerate()
        .map(|(idx, id)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(idx as u64 + 1);
            let mask = blob_mask(&mut rng, spec);
            let fields: Vec<Array2<f32>> = (0..FIELDS).map(|_| smooth_field(&mut rng, spec.size)).collect();
            let mut image = Array3::<f32>::zeros((spec.size, spec.size, b));
            for ((i, j, c), v) in image.indexed_iter_mut() {
                let m = &models[c];
                let texture: f32 = (0..FIELDS).map(|f| m.mix[f] * fields[f][[i, j]]).sum();
                let eps: f32 = StandardNormal.sample(&mut rng);
                let signal = m.signal * mask[[i, j]] as f32;
                *v = m.base + m.scale * (contrast * texture + spec.noise * eps + signal + spec.domain_shift);
            }
            Patch {
                id: id.clone(),
                image,
                mask,
                site: spec.site.clone(),
                timestamp: None,
            }
        })
        .collect()
}

/// In-memory corpus with ids `<prefix>_<split>_<index>`.
pub fn synthetic_corpus(name: &str, spec: &SyntheticSpec, sizes: SplitSizes) -> Result<Corpus> {
    let manifest = BandManifest::landslide4sense();
    let mut splits = SplitManifest {
        source: Some(name.to_string()),
        ..Default::default()
    };
    let mut ids = Vec::with_capacity(sizes.total());
    for split in Split::ALL {
        for i in 0..sizes.get(split) {
            let id = format!("{name}_{split}_{i:05}");
            splits.ids_mut(split).push(id.clone());
            ids.push(id);
        }
    }
    let patches = synthetic_patches(&manifest, spec, &ids);
    let options = CorpusOptions {
        patch_size: (spec.size, spec.size),
        validate_sample: 32,
    };
    Corpus::in_memory(name, patches, manifest, splits, options)
}
