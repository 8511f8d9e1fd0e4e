use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel counts with landslide as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Entrywise sum.
    pub fn merge(self, other: ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }

    /// Counts for one prediction/ground-truth pair.
    pub fn from_masks(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<Self> {
        if pred.dim() != truth.dim() {
            return Err(Error::Shape(format!(
                "prediction {:?} vs ground truth {:?}",
                pred.dim(),
                truth.dim()
            )));
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &t) in pred.iter().zip(truth.iter()) {
            match (p, t) {
                (1, 1) => cm.tp += 1,
                (1, 0) => cm.fp += 1,
                (0, 1) => cm.fn_ += 1,
                (0, 0) => cm.tn += 1,
                _ => {
                    return Err(Error::LabelDomain {
                        id: "evaluation".into(),
                        value: p.max(t),
                    })
                }
            }
        }
        Ok(cm)
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionMatrix::default(), ConfusionMatrix::merge)
    }
}

/// Returns `cm` plus the counts of one tile; `cm` itself is not modified.
pub fn accumulate(cm: &ConfusionMatrix, pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<ConfusionMatrix> {
    Ok(cm.merge(ConfusionMatrix::from_masks(pred, truth)?))
}

/// Segmentation scores as fractions in `[0, 1]`.
///
/// `macc` is overall pixel accuracy; `mean_class_acc` is the average of the
/// two per-class recalls. Any ratio with a zero denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub macc: f64,
    pub iou_ls: f64,
    pub iou_bg: f64,
    pub mean_class_acc: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn segmentation_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let ConfusionMatrix { tp, fp, fn_, tn } = *cm;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let iou_ls = ratio(tp, tp + fp + fn_);
    let iou_bg = ratio(tn, tn + fp + fn_);
    let specificity = ratio(tn, tn + fp);
    Ok(MetricReport {
        miou: (iou_ls + iou_bg) / 2.0,
        f1,
        precision,
        recall,
        macc: ratio(tp + tn, cm.total()),
        iou_ls,
        iou_bg,
        mean_class_acc: (recall + specificity) / 2.0,
    })
}
