use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{Corpus, Split};
use crate::error::{Error, Result};

pub const DEFAULT_PER_IMAGE: usize = 4000;

/// Pixel-label pairs: one row per sampled pixel, one column per band.
#[derive(Debug, Clone, PartialEq)]
pub struct MISample {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub band_names: Vec<String>,
}

impl MISample {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, band_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() || features.ncols() != band_names.len() {
            return Err(Error::Shape(format!(
                "{:?} features for {} labels and {} bands",
                features.dim(),
                labels.len(),
                band_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            band_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `per_image` distinct pixels from every image of `split`.
///
/// Image `i` uses its own ChaCha stream, so the result does not depend on
/// thread scheduling.
pub fn sample_pixels(corpus: &Corpus, split: Split, per_image: usize, seed: u64) -> Result<MISample> {
    let (h, w) = corpus.patch_size();
    if per_image > h * w {
        return Err(Error::SampleSize {
            requested: per_image,
            available: h * w,
        });
    }
    let ids = corpus.ids(split);
    if ids.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let b = corpus.bands().len();
    let blocks: Vec<(Vec<f64>, Vec<u8>)> = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let patch = corpus.patch(id)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let picks = index::sample(&mut rng, h * w, per_image);
            let mut values = Vec::with_capacity(per_image * b);
            let mut labels = Vec::with_capacity(per_image);
            for p in picks.iter() {
                let (r, c) = (p / w, p % w);
                values.extend((0..b).map(|ch| patch.image[[r, c, ch]] as f64));
                labels.push(patch.mask[[r, c]]);
            }
            Ok((values, labels))
        })
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(ids.len() * per_image * b);
    let mut labels = Vec::with_capacity(ids.len() * per_image);
    for (v, l) in blocks {
        values.extend(v);
        labels.extend(l);
    }
    let features = Array2::from_shape_vec((labels.len(), b), values).expect("rows are b wide");
    let names = corpus.bands().names().map(str::to_string).collect();
    MISample::new(features, labels, names)
}
