use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bands::BandManifest;
use super::patch::{check_mask_values, Patch};
use super::splits::{Split, SplitManifest};
use crate::error::{Error, Result};

pub const BAND_MANIFEST_FILE: &str = "bands.json";
pub const SPLIT_MANIFEST_FILE: &str = "splits.json";

/// On-disk container layout for a single patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchFormat {
    /// `<id>.h5` holding `img` (H x W x B float) and `mask` (H x W u8).
    Hdf5,
    /// `<id>.json` sidecar plus `<id>.img.bin` (little-endian f32, H x W x B
    /// row-major) and `<id>.mask.bin` (u8, H x W).
    Raw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSidecar {
    height: usize,
    width: usize,
    bands: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    site: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Expected (H, W) of every patch.
    pub patch_size: (usize, usize),
    /// Number of patches fully decoded and checked when opening.
    pub validate_sample: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            patch_size: (128, 128),
            validate_sample: 32,
        }
    }
}

#[derive(Debug, Clone)]
enum PatchStore {
    Disk(PathBuf),
    Memory(Arc<HashMap<String, Patch>>),
}

/// Handle over a patch collection with its band and split manifests.
/// Patches are decoded on demand; reads have no side effects.
#[derive(Debug, Clone)]
pub struct Corpus {
    name: String,
    store: PatchStore,
    bands: BandManifest,
    splits: SplitManifest,
    patch_size: (usize, usize),
    fingerprint: String,
}

pub fn load_corpus(root: &Path, bands: BandManifest, splits: SplitManifest) -> Result<Corpus> {
    Corpus::open(root, bands, splits, CorpusOptions::default())
}

impl Corpus {
    pub fn open(
        root: &Path,
        bands: BandManifest,
        splits: SplitManifest,
        options: CorpusOptions,
    ) -> Result<Self> {
        let name = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "corpus".into());
        let corpus = Self::assemble(name, PatchStore::Disk(root.to_path_buf()), bands, splits, &options)?;
        for id in corpus.splits.all_ids() {
            if locate(root, id).is_none() {
                return Err(Error::MissingPatch(id.clone()));
            }
        }
        corpus.validate_sample(options.validate_sample)?;
        Ok(corpus)
    }

    /// Opens `root` using the `bands.json` / `splits.json` manifests stored
    /// beside the patches.
    pub fn open_dir(root: &Path, options: CorpusOptions) -> Result<Self> {
        let bands = BandManifest::from_json_file(&root.join(BAND_MANIFEST_FILE))?;
        let splits = SplitManifest::from_json_file(&root.join(SPLIT_MANIFEST_FILE))?;
        Self::open(root, bands, splits, options)
    }

    pub fn in_memory(
        name: &str,
        patches: Vec<Patch>,
        bands: BandManifest,
        splits: SplitManifest,
        options: CorpusOptions,
    ) -> Result<Self> {
        let map: HashMap<String, Patch> = patches.into_iter().map(|p| (p.id.clone(), p)).collect();
        for id in splits.all_ids() {
            if !map.contains_key(id) {
                return Err(Error::MissingPatch(id.clone()));
            }
        }
        let corpus = Self::assemble(name.to_string(), PatchStore::Memory(Arc::new(map)), bands, splits, &options)?;
        corpus.validate_sample(options.validate_sample)?;
        Ok(corpus)
    }

    fn assemble(
        name: String,
        store: PatchStore,
        bands: BandManifest,
        splits: SplitManifest,
        options: &CorpusOptions,
    ) -> Result<Self> {
        splits.validate()?;
        let fingerprint = fingerprint(&bands, &splits, options.patch_size)?;
        Ok(Self {
            name,
            store,
            bands,
            splits,
            patch_size: options.patch_size,
            fingerprint,
        })
    }

    /// Decodes an evenly spaced sample (all patches when the corpus is small).
    fn validate_sample(&self, sample: usize) -> Result<()> {
        let ids: Vec<&String> = self.splits.all_ids().collect();
        let n = ids.len();
        if n == 0 {
            return Ok(());
        }
        let take = sample.max(1).min(n);
        for i in 0..take {
            self.patch(ids[i * n / take])?;
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bands(&self) -> &BandManifest {
        &self.bands
    }

    pub fn splits(&self) -> &SplitManifest {
        &self.splits
    }

    pub fn ids(&self, split: Split) -> &[String] {
        self.splits.ids(split)
    }

    pub fn patch_size(&self) -> (usize, usize) {
        self.patch_size
    }

    /// Content hash of the manifests and patch geometry.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn root(&self) -> Option<&Path> {
        match &self.store {
            PatchStore::Disk(p) => Some(p),
            PatchStore::Memory(_) => None,
        }
    }

    /// Loads and validates one patch.
    pub fn patch(&self, id: &str) -> Result<Patch> {
        let patch = match &self.store {
            PatchStore::Memory(map) => map
                .get(id)
                .cloned()
                .ok_or_else(|| Error::MissingPatch(id.to_string()))?,
            PatchStore::Disk(root) => read_patch(root, id)?,
        };
        self.check_schema(&patch)?;
        Ok(patch)
    }

    /// Loads only the mask of a patch.
    pub fn mask(&self, id: &str) -> Result<Array2<u8>> {
        let mask = match &self.store {
            PatchStore::Memory(map) => map
                .get(id)
                .map(|p| p.mask.clone())
                .ok_or_else(|| Error::MissingPatch(id.to_string()))?,
            PatchStore::Disk(root) => read_mask(root, id)?,
        };
        if mask.dim() != self.patch_size {
            return Err(Error::CorpusSchema {
                id: id.to_string(),
                detail: format!("mask is {:?}, expected {:?}", mask.dim(), self.patch_size),
            });
        }
        check_mask_values(id, &mask)?;
        Ok(mask)
    }

    fn check_schema(&self, patch: &Patch) -> Result<()> {
        let (h, w, b) = patch.image.dim();
        if (h, w) != self.patch_size || b != self.bands.len() {
            return Err(Error::CorpusSchema {
                id: patch.id.clone(),
                detail: format!(
                    "image is {h}x{w}x{b}, expected {}x{}x{}",
                    self.patch_size.0,
                    self.patch_size.1,
                    self.bands.len()
                ),
            });
        }
        patch.check_mask()
    }

    /// Writes every patch plus both manifests under `root`.
    pub fn write_to_dir(&self, root: &Path, format: PatchFormat) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for id in self.splits.all_ids() {
            write_patch(root, &self.patch(id)?, format)?;
        }
        self.bands.write_json(&root.join(BAND_MANIFEST_FILE))?;
        self.splits.write_json(&root.join(SPLIT_MANIFEST_FILE))
    }
}

fn fingerprint(bands: &BandManifest, splits: &SplitManifest, size: (usize, usize)) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(bands)?);
    h.update(serde_json::to_vec(splits)?);
    h.update(format!("{}x{}", size.0, size.1));
    Ok(hex::encode(h.finalize()))
}

fn locate(root: &Path, id: &str) -> Option<PatchFormat> {
    if cfg!(feature = "hdf5") && root.join(format!("{id}.h5")).is_file() {
        Some(PatchFormat::Hdf5)
    } else if root.join(format!("{id}.json")).is_file() {
        Some(PatchFormat::Raw)
    } else {
        None
    }
}

pub fn read_patch(root: &Path, id: &str) -> Result<Patch> {
    match locate(root, id) {
        Some(PatchFormat::Raw) => read_raw(root, id),
        #[cfg(feature = "hdf5")]
        Some(PatchFormat::Hdf5) => h5::read(root, id),
        _ => Err(Error::MissingPatch(id.to_string())),
    }
}

fn read_mask(root: &Path, id: &str) -> Result<Array2<u8>> {
    match locate(root, id) {
        Some(PatchFormat::Raw) => {
            let side = read_sidecar(root, id)?;
            read_raw_mask(root, id, &side)
        }
        #[cfg(feature = "hdf5")]
        Some(PatchFormat::Hdf5) => h5::read_mask(root, id),
        _ => Err(Error::MissingPatch(id.to_string())),
    }
}

pub fn write_patch(root: &Path, patch: &Patch, format: PatchFormat) -> Result<()> {
    match format {
        PatchFormat::Raw => write_raw(root, patch),
        #[cfg(feature = "hdf5")]
        PatchFormat::Hdf5 => h5::write(root, patch),
        #[cfg(not(feature = "hdf5"))]
        PatchFormat::Hdf5 => Err(Error::Config("built without HDF5 support".into())),
    }
}

fn read_sidecar(root: &Path, id: &str) -> Result<RawSidecar> {
    let path = root.join(format!("{id}.json"));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn read_raw(root: &Path, id: &str) -> Result<Patch> {
    let side = read_sidecar(root, id)?;
    let path = root.join(format!("{id}.img.bin"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = side.height * side.width * side.bands * 4;
    if bytes.len() != expected {
        return Err(Error::CorpusSchema {
            id: id.to_string(),
            detail: format!("image payload has {} bytes, sidecar implies {expected}", bytes.len()),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let image = Array3::from_shape_vec((side.height, side.width, side.bands), values)
        .map_err(|e| Error::CorpusSchema {
            id: id.to_string(),
            detail: e.to_string(),
        })?;
    let mask = read_raw_mask(root, id, &side)?;
    Ok(Patch {
        id: id.to_string(),
        image,
        mask,
        site: side.site,
        timestamp: side.timestamp,
    })
}

fn read_raw_mask(root: &Path, id: &str, side: &RawSidecar) -> Result<Array2<u8>> {
    let path = root.join(format!("{id}.mask.bin"));
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Array2::from_shape_vec((side.height, side.width), bytes).map_err(|e| Error::CorpusSchema {
        id: id.to_string(),
        detail: format!("mask payload: {e}"),
    })
}

fn write_raw(root: &Path, patch: &Patch) -> Result<()> {
    let (height, width, bands) = patch.image.dim();
    let side = RawSidecar {
        height,
        width,
        bands,
        site: patch.site.clone(),
        timestamp: patch.timestamp.clone(),
    };
    let path = root.join(format!("{}.json", patch.id));
    fs::write(&path, serde_json::to_vec_pretty(&side)?).map_err(|e| Error::io(&path, e))?;
    let bytes: Vec<u8> = patch.image.iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = root.join(format!("{}.img.bin", patch.id));
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    let mask: Vec<u8> = patch.mask.iter().copied().collect();
    let path = root.join(format!("{}.mask.bin", patch.id));
    fs::write(&path, mask).map_err(|e| Error::io(&path, e))
}

#[cfg(feature = "hdf5")]
mod h5 {
    use super::*;
    use hdf5_metno as hdf5;
    use ndarray::Ix3;

    pub(super) fn read(root: &Path, id: &str) -> Result<Patch> {
        let file = hdf5::File::open(root.join(format!("{id}.h5")))?;
        let image = file
            .dataset("img")?
            .read_dyn::<f32>()?
            .into_dimensionality::<Ix3>()
            .map_err(|e| Error::CorpusSchema {
                id: id.to_string(),
                detail: format!("img: {e}"),
            })?;
        let mask = read_mask_from(&file, id)?;
        Ok(Patch {
            id: id.to_string(),
            image,
            mask,
            site: None,
            timestamp: None,
        })
    }

    pub(super) fn read_mask(root: &Path, id: &str) -> Result<Array2<u8>> {
        let file = hdf5::File::open(root.join(format!("{id}.h5")))?;
        read_mask_from(&file, id)
    }

    fn read_mask_from(file: &hdf5::File, id: &str) -> Result<Array2<u8>> {
        file.dataset("mask")?.read_2d::<u8>().map_err(|e| Error::CorpusSchema {
            id: id.to_string(),
            detail: format!("mask: {e}"),
        })
    }

    pub(super) fn write(root: &Path, patch: &Patch) -> Result<()> {
        let file = hdf5::File::create(root.join(format!("{}.h5", patch.id)))?;
        file.new_dataset_builder().with_data(&patch.image).create("img")?;
        file.new_dataset_builder().with_data(&patch.mask).create("mask")?;
        Ok(())
    }
}
