use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channels the pretrained encoder was built around, with broad NIR (B8)
/// standing in for narrow NIR (B8A).
pub const HLS_SIX: [&str; 6] = ["B2", "B3", "B4", "B8", "B11", "B12"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDescriptor {
    pub name: String,
    pub resolution_m: f64,
    pub role: String,
}

impl BandDescriptor {
    pub fn new(name: &str, resolution_m: f64, role: &str) -> Self {
        Self {
            name: name.to_string(),
            resolution_m,
            role: role.to_string(),
        }
    }
}

/// Ordered channel layout shared by every image tensor of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BandDescriptor>", into = "Vec<BandDescriptor>")]
pub struct BandManifest {
    bands: Vec<BandDescriptor>,
}

impl TryFrom<Vec<BandDescriptor>> for BandManifest {
    type Error = Error;

    fn try_from(bands: Vec<BandDescriptor>) -> Result<Self> {
        BandManifest::new(bands)
    }
}

impl From<BandManifest> for Vec<BandDescriptor> {
    fn from(m: BandManifest) -> Self {
        m.bands
    }
}

impl BandManifest {
    pub fn new(bands: Vec<BandDescriptor>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::BandManifest("no bands listed".into()));
        }
        let mut seen = HashSet::new();
        for b in &bands {
            if !seen.insert(b.name.as_str()) {
                return Err(Error::BandManifest(format!("duplicate band `{}`", b.name)));
            }
        }
        Ok(Self { bands })
    }

    /// The 14-layer Landslide4Sense stack: Sentinel-2 B1..B12 followed by
    /// ALOS PALSAR slope and DEM, all resampled to 10 m in the release.
    pub fn landslide4sense() -> Self {
        let s2 = [
            ("B1", 60.0, "coastal aerosol"),
            ("B2", 10.0, "blue"),
            ("B3", 10.0, "green"),
            ("B4", 10.0, "red"),
            ("B5", 20.0, "red edge 1"),
            ("B6", 20.0, "red edge 2"),
            ("B7", 20.0, "red edge 3"),
            ("B8", 10.0, "nir broad"),
            ("B9", 60.0, "water vapour"),
            ("B10", 60.0, "cirrus"),
            ("B11", 20.0, "swir 1"),
            ("B12", 20.0, "swir 2"),
            ("slope", 12.5, "terrain slope"),
            ("DEM", 12.5, "elevation"),
        ];
        let bands = s2
            .iter()
            .map(|(n, r, role)| BandDescriptor::new(n, *r, role))
            .collect();
        Self { bands }
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn bands(&self) -> &[BandDescriptor] {
        &self.bands
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bands.iter().map(|b| b.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.name == name)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A named, ordered channel selection. Order is semantic: position `i` of
/// the model input is `channels[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandConfig {
    pub name: String,
    pub channels: Vec<String>,
}

impl BandConfig {
    pub fn new<S: AsRef<str>>(name: &str, channels: &[S]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config(format!("band config `{name}` has no channels")));
        }
        Ok(Self {
            name: name.to_string(),
            channels: channels.iter().map(|c| c.as_ref().to_string()).collect(),
        })
    }

    pub fn b_in(&self) -> usize {
        self.channels.len()
    }

    /// Manifest positions of each configured channel, in config order.
    pub fn resolve(&self, manifest: &BandManifest) -> Result<Vec<usize>> {
        self.channels
            .iter()
            .map(|c| {
                manifest
                    .index_of(c)
                    .ok_or_else(|| Error::ChannelNotFound(c.clone()))
            })
            .collect()
    }

    /// The manifest describing tensors produced by selecting this config.
    pub fn sub_manifest(&self, manifest: &BandManifest) -> Result<BandManifest> {
        let idx = self.resolve(manifest)?;
        BandManifest::new(idx.iter().map(|&i| manifest.bands[i].clone()).collect())
    }

    pub fn full_14b() -> Self {
        let m = BandManifest::landslide4sense();
        Self {
            name: "Full-14B".into(),
            channels: m.names().map(String::from).collect(),
        }
    }

    pub fn nine_band() -> Self {
        Self::fixed("9B", &["B2", "B3", "B4", "B8", "B11", "B12", "B5", "B6", "B7"])
    }

    pub fn hls_6b() -> Self {
        Self::fixed("HLS-6B", &HLS_SIX)
    }

    /// HLS bands in a fixed non-canonical order.
    pub fn hls_shuffled() -> Self {
        Self::fixed("HLS-shuffled", &["B8", "B4", "B12", "B2", "B11", "B3"])
    }

    pub fn mi_6a() -> Self {
        Self::fixed("MI-6a", &["B2", "B3", "B5", "B7", "B8", "B9"])
    }

    pub fn mi_6b() -> Self {
        Self::fixed("MI-6b", &["B1", "B2", "B3", "B4", "B9", "DEM"])
    }

    pub fn rgb_nir() -> Self {
        Self::fixed("RGB+NIR", &["B2", "B3", "B4", "B8"])
    }

    /// The seven configurations of the sensor-axis grid.
    pub fn presets() -> Vec<Self> {
        vec![
            Self::full_14b(),
            Self::nine_band(),
            Self::hls_6b(),
            Self::hls_shuffled(),
            Self::mi_6a(),
            Self::mi_6b(),
            Self::rgb_nir(),
        ]
    }

    pub fn preset(name: &str) -> Option<Self> {
        Self::presets()
            .into_iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    fn fixed(name: &str, channels: &[&str]) -> Self {
        Self {
            name: name.into(),
            channels: channels.iter().map(|c| c.to_string()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_against_landslide4sense() {
        let m = BandManifest::landslide4sense();
        assert_eq!(m.len(), 14);
        for cfg in BandConfig::presets() {
            let idx = cfg.resolve(&m).unwrap();
            assert_eq!(idx.len(), cfg.b_in());
        }
        assert_eq!(BandConfig::hls_6b().resolve(&m).unwrap(), vec![1, 2, 3, 7, 10, 11]);
    }

    #[test]
    fn shuffled_is_permutation_of_baseline() {
        let mut a = BandConfig::hls_6b().channels;
        let mut b = BandConfig::hls_shuffled().channels;
        assert_ne!(a, b);
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_band_names_rejected() {
        let bands = vec![
            BandDescriptor::new("B2", 10.0, "blue"),
            BandDescriptor::new("B2", 10.0, "blue"),
        ];
        assert!(matches!(BandManifest::new(bands), Err(Error::BandManifest(_))));
        let json = r#"[{"name":"B2","resolution_m":10,"role":"a"},{"name":"B2","resolution_m":10,"role":"b"}]"#;
        assert!(serde_json::from_str::<BandManifest>(json).is_err());
    }

    #[test]
    fn unknown_channel_is_reported() {
        let cfg = BandConfig::new("x", &["B2", "B8A"]).unwrap();
        match cfg.resolve(&BandManifest::landslide4sense()) {
            Err(Error::ChannelNotFound(c)) => assert_eq!(c, "B8A"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
