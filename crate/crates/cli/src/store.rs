//! On-disk feature store written by `encode` and read by `fit` / `eval`.
//!
//! ```text
//! STORE/index.json
//! STORE/features/00000.radt   one 1-D f32 tensor per manifest record
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use radam_core::tensorio::{read_tensor, Split};

use crate::config::Pooling;
use crate::error::{CliError, Result};

pub const INDEX_FILE: &str = "index.json";
pub const FEATURES_DIR: &str = "features";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcgRecord {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub x0: u64,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub index: usize,
    /// Relative to the store root.
    pub file: String,
    pub path: String,
    pub label: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeFailure {
    pub index: usize,
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub pooling: Pooling,
    pub m: usize,
    pub q: usize,
    pub lcg: LcgRecord,
    pub feature_dim: usize,
    pub records: Vec<StoreRecord>,
    pub failures: Vec<EncodeFailure>,
}

pub fn feature_file(index: usize) -> String {
    format!("{FEATURES_DIR}/{index:05}.radt")
}

impl StoreIndex {
    pub fn load(store: &Path) -> Result<Self> {
        let path = store.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::validation(format!("{}: malformed store index: {e}", path.display()))
        })
    }

    pub fn save(&self, store: &Path) -> Result<()> {
        let path = store.join(INDEX_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("store index serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Error listing every record whose feature file is absent.
    pub fn check_files(&self, store: &Path) -> Result<()> {
        let missing: Vec<String> = self
            .records
            .iter()
            .filter(|r| !store.join(&r.file).is_file())
            .map(|r| format!("  {} ({})", store.join(&r.file).display(), r.path))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CliError::validation(format!(
                "{} feature file(s) missing from {}:\n{}",
                missing.len(),
                store.display(),
                missing.join("\n")
            )))
        }
    }

    pub fn load_feature(&self, store: &Path, record: &StoreRecord) -> Result<Vec<f64>> {
        let path: PathBuf = store.join(&record.file);
        let tensor = read_tensor(&path)?;
        if tensor.dims() != [self.feature_dim] {
            return Err(CliError::validation(format!(
                "{}: expected a feature of length {}, found shape {:?}",
                path.display(),
                self.feature_dim,
                tensor.dims()
            )));
        }
        Ok(tensor.data().iter().map(|&v| v as f64).collect())
    }

    /// Distinct folds in ascending order; `[None]` when the manifest had none.
    pub fn folds(&self) -> Result<Vec<Option<u32>>> {
        let with = self.records.iter().filter(|r| r.fold.is_some()).count();
        if with == 0 {
            return Ok(vec![None]);
        }
        if with != self.records.len() {
            return Err(CliError::validation(format!(
                "{with} of {} records carry a fold; either all or none must",
                self.records.len()
            )));
        }
        let mut folds: Vec<u32> = self.records.iter().filter_map(|r| r.fold).collect();
        folds.sort_unstable();
        folds.dedup();
        Ok(folds.into_iter().map(Some).collect())
    }

    pub fn select(&self, fold: Option<u32>, split: Split) -> Vec<&StoreRecord> {
        self.records
            .iter()
            .filter(|r| r.fold == fold && r.split == split)
            .collect()
    }
}
