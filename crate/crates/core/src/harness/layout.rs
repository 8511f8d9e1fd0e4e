use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluate::SplitEval;
use super::train::RunRecord;
use crate::datasets::SubsetSelection;
use crate::error::{Error, Result};

pub const RECORD_FILE: &str = "record.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const STANDARDIZER_FILE: &str = "standardizer.json";

/// Directory layout under an output root:
///
/// ```text
/// runs/<run_id>/{record.json, metrics.json, standardizer.json, checkpoint/}
/// subsets/subset_k<k>_seed<seed>.json
/// axes/{sensor,label,domain}.json
/// tables/   figures/
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutLayout {
    root: PathBuf,
}

/// Run summary without timing information, so repeated runs compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub config_fingerprint: String,
    pub selected_epoch: usize,
    pub val_loss: Vec<f64>,
    pub evaluations: Vec<SplitEval>,
}

impl From<&RunRecord> for RunMetrics {
    fn from(r: &RunRecord) -> Self {
        Self {
            run_id: r.run_id.clone(),
            config_fingerprint: r.config_fingerprint.clone(),
            selected_epoch: r.selected_epoch,
            val_loss: r.val_loss.clone(),
            evaluations: r.evaluations.clone(),
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pretty JSON with a trailing newline; parent directories are created.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::DanglingReference(format!("{} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl OutLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn checkpoint_dir(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join("checkpoint")
    }

    /// Training-split statistics of a run, reused for any later inference.
    pub fn standardizer_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join(STANDARDIZER_FILE)
    }

    pub fn subsets_dir(&self) -> PathBuf {
        self.root.join("subsets")
    }

    pub fn subset_path(&self, k: f64, seed: u64) -> PathBuf {
        self.subsets_dir().join(SubsetSelection::file_name(k, seed))
    }

    /// Serialized axis outcomes, one file per axis.
    pub fn axis_path(&self, axis: &str) -> PathBuf {
        self.root.join("axes").join(format!("{axis}.json"))
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.root.join("tables")
    }

    pub fn figures_dir(&self) -> PathBuf {
        self.root.join("figures")
    }

    /// `path` relative to the root, with forward slashes.
    pub fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn write_subset(&self, subset: &SubsetSelection) -> Result<PathBuf> {
        let path = self.subset_path(subset.k, subset.seed);
        std::fs::create_dir_all(self.subsets_dir()).map_err(|e| Error::io(self.subsets_dir(), e))?;
        subset.write_json(&path)?;
        Ok(path)
    }

    pub fn write_record(&self, record: &RunRecord) -> Result<()> {
        let dir = self.run_dir(&record.run_id);
        write_json(&dir.join(RECORD_FILE), record)?;
        write_json(&dir.join(METRICS_FILE), &RunMetrics::from(record))
    }

    pub fn read_record(&self, run_id: &str) -> Result<RunRecord> {
        let path = self.run_dir(run_id).join(RECORD_FILE);
        if !path.exists() {
            return Err(Error::DanglingReference(format!("run `{run_id}` has no record under {}", self.runs_dir().display())));
        }
        read_json(&path)
    }

    /// All run ids with a record, sorted.
    pub fn run_ids(&self) -> Result<Vec<String>> {
        let dir = self.runs_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.path().join(RECORD_FILE).exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Checks that every artifact a record points at exists and still has
    /// the recorded hash.
    pub fn verify_record(&self, record: &RunRecord) -> Result<()> {
        if record.config.fingerprint() != record.config_fingerprint {
            return Err(Error::DanglingReference(format!(
                "run `{}`: configuration does not match its fingerprint",
                record.run_id
            )));
        }
        if let Some(ck) = &record.checkpoint {
            for (file, hash) in &ck.files {
                let path = self.resolve(&ck.dir).join(file);
                if !path.exists() {
                    return Err(Error::DanglingReference(format!("run `{}`: missing {}", record.run_id, path.display())));
                }
                if &sha256_file(&path)? != hash {
                    return Err(Error::DanglingReference(format!(
                        "run `{}`: {} changed since the run",
                        record.run_id,
                        path.display()
                    )));
                }
            }
        }
        if let Some(subset) = &record.subset {
            if let Some(rel) = &subset.path {
                let path = self.resolve(rel);
                if !path.exists() {
                    return Err(Error::DanglingReference(format!("run `{}`: missing {}", record.run_id, path.display())));
                }
                let stored = SubsetSelection::read_json(&path)?;
                if stored.manifest_hash()? != subset.manifest_hash {
                    return Err(Error::DanglingReference(format!(
                        "run `{}`: subset manifest {} changed since the run",
                        record.run_id,
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
