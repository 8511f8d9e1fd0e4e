//! Patch corpora: band and split manifests, storage, standardization,
//! augmentation, and stratified label-fraction subsets.

mod bands;
mod corpus;
mod patch;
mod splits;
mod standardize;
mod subset;
pub mod synthetic;

pub use bands::{BandConfig, BandDescriptor, BandManifest, HLS_SIX};
pub use corpus::{
    load_corpus, read_patch, write_patch, Corpus, CorpusOptions, PatchFormat, BAND_MANIFEST_FILE,
    SPLIT_MANIFEST_FILE,
};
pub use patch::{augment, flip, mask_fraction, select_bands, Patch};
pub use splits::{Split, SplitManifest};
pub use standardize::{
    fit_standardizer, standardize, ChannelMoments, FitPolicy, FitProvenance, Standardizer, STD_EPSILON,
};
pub use subset::{
    allocate, strata, stratified_subset, stratified_subset_from_fractions, subset_size, SubsetSelection,
    DEFAULT_STRATA,
};
