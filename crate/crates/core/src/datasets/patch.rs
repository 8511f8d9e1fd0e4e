use ndarray::{s, Array2, Array3, Axis};
use rand::Rng;

use super::bands::{BandConfig, BandManifest};
use crate::error::{Error, Result};

/// One image tile with its binary landslide mask.
///
/// `image` is laid out `H x W x B`; `mask` is `H x W` with 0 = background
/// and 1 = landslide.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub id: String,
    pub image: Array3<f32>,
    pub mask: Array2<u8>,
    pub site: Option<String>,
    pub timestamp: Option<String>,
}

impl Patch {
    pub fn new(id: impl Into<String>, image: Array3<f32>, mask: Array2<u8>) -> Result<Self> {
        let patch = Self {
            id: id.into(),
            image,
            mask,
            site: None,
            timestamp: None,
        };
        patch.check_mask()?;
        Ok(patch)
    }

    pub fn with_site(mut self, site: impl Into<String>) -> Self {
        self.site = Some(site.into());
        self
    }

    pub fn height(&self) -> usize {
        self.image.dim().0
    }

    pub fn width(&self) -> usize {
        self.image.dim().1
    }

    pub fn bands(&self) -> usize {
        self.image.dim().2
    }

    pub fn landslide_fraction(&self) -> f64 {
        mask_fraction(&self.mask)
    }

    pub(crate) fn check_mask(&self) -> Result<()> {
        let (h, w, _) = self.image.dim();
        if self.mask.dim() != (h, w) {
            return Err(Error::CorpusSchema {
                id: self.id.clone(),
                detail: format!("mask is {:?} but image is {h}x{w}", self.mask.dim()),
            });
        }
        check_mask_values(&self.id, &self.mask)
    }
}

pub(crate) fn check_mask_values(id: &str, mask: &Array2<u8>) -> Result<()> {
    match mask.iter().find(|&&v| v > 1) {
        Some(&value) => Err(Error::LabelDomain {
            id: id.to_string(),
            value,
        }),
        None => Ok(()),
    }
}

pub fn mask_fraction(mask: &Array2<u8>) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.iter().filter(|&&v| v == 1).count() as f64 / mask.len() as f64
}

/// Extracts the configured channels in config order.
pub fn select_bands(patch: &Patch, config: &BandConfig, manifest: &BandManifest) -> Result<Patch> {
    if patch.bands() != manifest.len() {
        return Err(Error::ChannelCount {
            expected: manifest.len(),
            actual: patch.bands(),
        });
    }
    let idx = config.resolve(manifest)?;
    Ok(Patch {
        image: patch.image.select(Axis(2), &idx),
        ..patch.clone()
    })
}

/// Deterministic flip: `horizontal` mirrors columns, `vertical` mirrors rows.
/// Image and mask move together.
pub fn flip(patch: &Patch, horizontal: bool, vertical: bool) -> Patch {
    let mut image = patch.image.view();
    let mut mask = patch.mask.view();
    if horizontal {
        image = image.slice_move(s![.., ..;-1, ..]);
        mask = mask.slice_move(s![.., ..;-1]);
    }
    if vertical {
        image = image.slice_move(s![..;-1, .., ..]);
        mask = mask.slice_move(s![..;-1, ..]);
    }
    Patch {
        image: image.to_owned(),
        mask: mask.to_owned(),
        ..patch.clone()
    }
}

/// Training-time augmentation: horizontal and vertical flips, each with
/// probability 0.5, drawn in that order from `rng`.
pub fn augment<R: Rng + ?Sized>(patch: &Patch, rng: &mut R) -> Patch {
    let horizontal = rng.random_bool(0.5);
    let vertical = rng.random_bool(0.5);
    flip(patch, horizontal, vertical)
}
