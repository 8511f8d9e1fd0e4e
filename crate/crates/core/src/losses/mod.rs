//! Imbalance-aware segmentation objectives: weighted cross-entropy,
//! Lovász-Softmax and focal loss.
//!
//! The kernels run in `f64` and return analytic gradients. Images are
//! reduced by the mean over pixels, batches by the mean over images.

mod op;
mod pixel;
mod select;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use op::loss_tensor;
pub use select::{best_epoch, select_loss_by_validation, LossRun, LossSelection, LossSelectionRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Wce,
    Lovasz,
    Focal,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Wce => "wce",
            LossKind::Lovasz => "lovasz",
            LossKind::Focal => "focal",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wce" => Ok(LossKind::Wce),
            "lovasz" => Ok(LossKind::Lovasz),
            "focal" => Ok(LossKind::Focal),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Which classes the Lovász loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LovaszClasses {
    /// Only classes that occur in the ground truth of the image.
    #[default]
    Present,
    All,
}

fn default_weights() -> [f64; 2] {
    [2.0, 8.0]
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// `(w_bg, w_ls)` for weighted cross-entropy.
    #[serde(default = "default_weights")]
    pub w: [f64; 2],
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub classes: LovaszClasses,
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            w: default_weights(),
            gamma: default_gamma(),
            alpha: None,
            classes: LovaszClasses::Present,
        }
    }

    pub fn wce() -> Self {
        Self::new(LossKind::Wce)
    }

    pub fn lovasz() -> Self {
        Self::new(LossKind::Lovasz)
    }

    pub fn focal() -> Self {
        Self::new(LossKind::Focal)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.w.iter().all(|w| w.is_finite() && *w > 0.0) {
            return Err(Error::Weight(format!("class weights {:?} must be positive", self.w)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Weight(format!("focusing exponent {} must be >= 0", self.gamma)));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Weight(format!("focal alpha {a} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Loss and gradient for one image of `H x W x 2` logits.
    pub fn value_and_grad(&self, logits: ArrayView3<f64>, mask: ArrayView2<u8>) -> Result<(f64, Array3<f64>)> {
        self.validate()?;
        let (h, w) = check_pair(logits, mask)?;
        let (z, y) = flatten(logits, mask);
        let (v, g) = self.pixels(&z, &y);
        let grad = Array3::from_shape_fn((h, w, 2), |(i, j, c)| g[i * w + j][c]);
        Ok((v, grad))
    }

    /// Batched evaluation over `N x 2 x P` logits in channel-major (NCHW)
    /// order and `N x P` labels; returns the batch-mean loss and its
    /// gradient in the same layout.
    pub fn batch_value_and_grad(&self, logits: &[f64], labels: &[u8], n: usize) -> Result<(f64, Vec<f64>)> {
        self.validate()?;
        if n == 0 || logits.len() != 2 * labels.len() || !labels.len().is_multiple_of(n) {
            return Err(Error::Shape(format!(
                "{} logits and {} labels for a batch of {n}",
                logits.len(),
                labels.len()
            )));
        }
        if let Some(&v) = labels.iter().find(|&&v| v > 1) {
            return Err(Error::LabelDomain {
                id: "batch".into(),
                value: v,
            });
        }
        let p = labels.len() / n;
        let mut total = 0.0;
        let mut grad = vec![0.0; logits.len()];
        for img in 0..n {
            let base = img * 2 * p;
            let z: Vec<[f64; 2]> = (0..p).map(|i| [logits[base + i], logits[base + p + i]]).collect();
            let (v, g) = self.pixels(&z, &labels[img * p..(img + 1) * p]);
            total += v;
            for (i, gi) in g.iter().enumerate() {
                grad[base + i] = gi[0] / n as f64;
                grad[base + p + i] = gi[1] / n as f64;
            }
        }
        Ok((total / n as f64, grad))
    }

    fn pixels(&self, z: &[[f64; 2]], y: &[u8]) -> (f64, Vec<[f64; 2]>) {
        match self.kind {
            LossKind::Wce => pixel::wce(z, y, self.w),
            LossKind::Focal => pixel::focal(z, y, self.gamma, self.alpha),
            LossKind::Lovasz => pixel::lovasz_logits(z, y, self.classes == LovaszClasses::Present),
        }
    }
}

fn check_pair(values: ArrayView3<f64>, mask: ArrayView2<u8>) -> Result<(usize, usize)> {
    let (h, w, c) = values.dim();
    if c != 2 || mask.dim() != (h, w) {
        return Err(Error::Shape(format!(
            "expected H x W x 2 values matching a H x W mask, got {:?} and {:?}",
            values.dim(),
            mask.dim()
        )));
    }
    if let Some(&v) = mask.iter().find(|&&v| v > 1) {
        return Err(Error::LabelDomain {
            id: "mask".into(),
            value: v,
        });
    }
    Ok((h, w))
}

fn flatten(values: ArrayView3<f64>, mask: ArrayView2<u8>) -> (Vec<[f64; 2]>, Vec<u8>) {
    let (h, w, _) = values.dim();
    let mut z = Vec::with_capacity(h * w);
    let mut y = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            z.push([values[[i, j, 0]], values[[i, j, 1]]]);
            y.push(mask[[i, j]]);
        }
    }
    (z, y)
}

/// Weighted cross-entropy with `w = (w_bg, w_ls)`.
pub fn wce_loss(logits: ArrayView3<f64>, mask: ArrayView2<u8>, w: [f64; 2]) -> Result<f64> {
    let spec = LossSpec { w, ..LossSpec::wce() };
    spec.value_and_grad(logits, mask).map(|(v, _)| v)
}

/// Focal loss with focusing exponent `gamma` and optional class balance `alpha`.
pub fn focal_loss(logits: ArrayView3<f64>, mask: ArrayView2<u8>, gamma: f64, alpha: Option<f64>) -> Result<f64> {
    let spec = LossSpec {
        gamma,
        alpha,
        ..LossSpec::focal()
    };
    spec.value_and_grad(logits, mask).map(|(v, _)| v)
}

/// Lovász-Softmax evaluated directly on class probabilities.
pub fn lovasz_softmax_loss(probs: ArrayView3<f64>, mask: ArrayView2<u8>, classes: LovaszClasses) -> Result<f64> {
    let _ = check_pair(probs, mask)?;
    let (p, y) = flatten(probs, mask);
    let worst = p.iter().map(|q| (q[0] + q[1] - 1.0).abs()).fold(0.0, f64::max);
    if worst > 1e-4 {
        return Err(Error::Probability(worst));
    }
    Ok(pixel::lovasz(&p, &y, classes == LovaszClasses::Present).0)
}

/// Plain (unweighted) cross-entropy, used as the reduction reference.
pub fn cross_entropy(logits: ArrayView3<f64>, mask: ArrayView2<u8>) -> Result<f64> {
    wce_loss(logits, mask, [1.0, 1.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn one_pixel(z: [f64; 2]) -> Array3<f64> {
        Array3::from_shape_vec((1, 1, 2), z.to_vec()).unwrap()
    }

    #[test]
    fn wce_single_landslide_pixel_at_half() {
        let v = wce_loss(one_pixel([0.3, 0.3]).view(), array![[1u8]].view(), [2.0, 8.0]).unwrap();
        assert!((v - (-8.0 * 0.5f64.ln())).abs() < 1e-12);
        assert!((v - 5.545).abs() < 1e-3);
    }

    #[test]
    fn wce_perfect_logits_near_zero() {
        let v = wce_loss(one_pixel([-40.0, 40.0]).view(), array![[1u8]].view(), [2.0, 8.0]).unwrap();
        assert!(v < 1e-30);
    }

    #[test]
    fn focal_arithmetic() {
        // softmax([0, ln 9]) = [0.1, 0.9]
        let v = focal_loss(one_pixel([0.0, 9f64.ln()]).view(), array![[1u8]].view(), 2.0, None).unwrap();
        let want = 0.01 * -(0.9f64.ln());
        assert!((v - want).abs() < 1e-15);
        assert!((v - 1.054e-3).abs() < 1e-6);
    }

    #[test]
    fn focal_to_ce_ratio_is_modulating_factor() {
        for pt in [0.6f64, 0.9, 0.99, 0.999] {
            let z = one_pixel([0.0, (pt / (1.0 - pt)).ln()]);
            let m = array![[1u8]];
            let f = focal_loss(z.view(), m.view(), 2.0, None).unwrap();
            let ce = cross_entropy(z.view(), m.view()).unwrap();
            assert!((f / ce - (1.0 - pt).powi(2)).abs() < 1e-9);
        }
    }

    #[test]
    fn lovasz_zero_for_exact_hard_prediction() {
        let mask = array![[1u8, 0], [0, 1]];
        let probs = Array3::from_shape_fn((2, 2, 2), |(i, j, c)| {
            let y = mask[[i, j]] as usize;
            if c == y { 1.0 } else { 0.0 }
        });
        assert_eq!(lovasz_softmax_loss(probs.view(), mask.view(), LovaszClasses::Present).unwrap(), 0.0);
    }

    #[test]
    fn lovasz_rejects_unnormalized() {
        let probs = Array3::from_elem((1, 2, 2), 0.6);
        let mask = Array2::<u8>::zeros((1, 2));
        assert!(matches!(
            lovasz_softmax_loss(probs.view(), mask.view(), LovaszClasses::Present),
            Err(Error::Probability(_))
        ));
    }

    #[test]
    fn nonpositive_weights_rejected() {
        let r = wce_loss(one_pixel([0.0, 0.0]).view(), array![[0u8]].view(), [0.0, 8.0]);
        assert!(matches!(r, Err(Error::Weight(_))));
    }

    #[test]
    fn spec_json_layout() {
        let json = serde_json::to_value(LossSpec::wce()).unwrap();
        assert_eq!(json, serde_json::json!({"kind":"wce","w":[2.0,8.0],"gamma":2.0,"classes":"present"}));
        let parsed: LossSpec = serde_json::from_str(r#"{"kind":"focal"}"#).unwrap();
        assert_eq!(parsed, LossSpec::focal());
    }
}
