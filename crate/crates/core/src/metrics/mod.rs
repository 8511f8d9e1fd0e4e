//! Global confusion-matrix metrics plus the label-efficiency (RPD, DE) and
//! transfer-retention summaries.

mod confusion;
mod efficiency;

pub use confusion::{accumulate, segmentation_metrics, ConfusionMatrix, MetricReport};
pub use efficiency::{efficiency_report, transfer_report, EfficiencyReport, FractionValue, TransferReport, SCARCE_FRACTIONS};
