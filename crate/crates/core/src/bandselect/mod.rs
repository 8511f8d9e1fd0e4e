//! Mutual-information ranking of spectral channels against the landslide
//! label, and the informed band configurations derived from it.

mod mi;
mod sample;

pub use mi::{estimate_mi, mi_channel, top_k_config, MIReport, DEFAULT_NEIGHBORS};
pub use sample::{sample_pixels, MISample, DEFAULT_PER_IMAGE};
