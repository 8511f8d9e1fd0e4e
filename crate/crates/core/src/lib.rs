//! Band-adaptive fine-tuning and robustness evaluation of segmentation
//! encoders for landslide mapping.
//!
//! The crate covers patch corpora and band handling ([`datasets`]),
//! mutual-information channel ranking ([`bandselect`]), adapter + encoder +
//! decoder models ([`model`]), imbalance-aware losses ([`losses`]),
//! segmentation and efficiency metrics ([`metrics`]), the training harness
//! and experiment axes ([`harness`]), and report rendering ([`report`]).

pub mod bandselect;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod report;
