use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use radam_core::aggregate::{gap, gap_agg, ActivationMap};
use radam_core::rae::RadamEncoder;
use radam_core::tensorio::{read_manifest, read_tensor, write_tensor, Record, Tensor};

use crate::config::{Pooling, RunConfig};
use crate::error::{CliError, Result};
use crate::store::{feature_file, EncodeFailure, LcgRecord, StoreIndex, StoreRecord, FEATURES_DIR};

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeSummary {
    pub records: usize,
    /// Distinct images actually encoded.
    pub unique: usize,
    pub feature_dim: usize,
    pub store: PathBuf,
}

pub fn load_maps(blocks: &[PathBuf]) -> radam_core::Result<Vec<ActivationMap>> {
    blocks
        .iter()
        .enumerate()
        .map(|(i, path)| ActivationMap::from_tensor(&read_tensor(path)?, i))
        .collect()
}

enum Pooler {
    Radam(RadamEncoder),
    Gap,
    GapAgg,
}

impl Pooler {
    fn pool(&self, maps: &[ActivationMap]) -> radam_core::Result<Vec<f64>> {
        match self {
            Pooler::Radam(enc) => Ok(enc.encode(maps)?.phi),
            Pooler::Gap => maps
                .last()
                .map(gap)
                .ok_or_else(|| radam_core::Error::Validation("record has no blocks".into())),
            Pooler::GapAgg => Ok(gap_agg(maps)),
        }
    }
}

/// The PE table and encoder weights are shared by every image, so they are
/// built once from the first record that loads.
fn build_pooler(cfg: &RunConfig, unique: &[&Record]) -> Result<Pooler> {
    match cfg.pooling {
        Pooling::Gap => Ok(Pooler::Gap),
        Pooling::GapAgg => Ok(Pooler::GapAgg),
        Pooling::Radam => {
            let maps = unique
                .iter()
                .find_map(|r| load_maps(&r.blocks).ok())
                .ok_or_else(|| CliError::Partial {
                    failed: unique.len(),
                    total: unique.len(),
                    errors: vec!["no record could be loaded".into()],
                })?;
            Ok(Pooler::Radam(RadamEncoder::for_maps(&maps, cfg.radam())?))
        }
    }
}

pub fn cmd_encode(cfg: &RunConfig) -> Result<EncodeSummary> {
    cfg.validate()?;
    let manifest_path = cfg
        .manifest_path
        .as_deref()
        .ok_or_else(|| CliError::validation("--manifest is required"))?;
    let manifest = read_manifest(manifest_path)?;
    let store = cfg.output_dir.as_path();

    // Records naming the same blocks share one encoding.
    let mut slot_of: HashMap<&[PathBuf], usize> = HashMap::new();
    let mut unique: Vec<&Record> = Vec::new();
    let slots: Vec<usize> = manifest
        .records
        .iter()
        .map(|r| {
            *slot_of.entry(r.blocks.as_slice()).or_insert_with(|| {
                unique.push(r);
                unique.len() - 1
            })
        })
        .collect();

    let pooler = build_pooler(cfg, &unique)?;
    let pool = cfg.thread_pool()?;
    let results: Vec<std::result::Result<Vec<f64>, String>> = pool.install(|| {
        unique
            .par_iter()
            .map(|r| {
                load_maps(&r.blocks)
                    .and_then(|maps| pooler.pool(&maps))
                    .map_err(|e| e.to_string())
            })
            .collect()
    });

    // The first successful feature fixes the dimension for the store.
    let feature_dim = results.iter().find_map(|r| r.as_ref().ok().map(Vec::len));

    let features_dir = store.join(FEATURES_DIR);
    if features_dir.exists() {
        fs::remove_dir_all(&features_dir).map_err(|e| CliError::io(&features_dir, e))?;
    }
    fs::create_dir_all(&features_dir).map_err(|e| CliError::io(&features_dir, e))?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (index, (record, &slot)) in manifest.records.iter().zip(&slots).enumerate() {
        let outcome = match &results[slot] {
            Ok(phi) if Some(phi.len()) == feature_dim => Ok(phi),
            Ok(phi) => Err(format!(
                "feature length {} differs from the store's {}",
                phi.len(),
                feature_dim.unwrap_or(0)
            )),
            Err(e) => Err(e.clone()),
        };
        match outcome {
            Ok(phi) => {
                let file = feature_file(index);
                let tensor = Tensor::from_vec(phi.iter().map(|&v| v as f32).collect())?;
                write_tensor(&tensor, store.join(&file))?;
                records.push(StoreRecord {
                    index,
                    file,
                    path: record.path.clone(),
                    label: record.label.clone(),
                    split: record.split,
                    fold: record.fold,
                });
            }
            Err(error) => failures.push(EncodeFailure {
                index,
                path: record.path.clone(),
                error,
            }),
        }
    }

    let lcg = cfg.radam().lcg;
    let index = StoreIndex {
        pooling: cfg.pooling,
        m: cfg.m,
        q: cfg.q,
        lcg: LcgRecord {
            a: lcg.a(),
            b: lcg.b(),
            c: lcg.c(),
            x0: cfg.lcg.x0(),
            offset: cfg.lcg_offset,
        },
        feature_dim: feature_dim.unwrap_or(0),
        records,
        failures,
    };
    index.save(store)?;

    if !index.failures.is_empty() {
        return Err(CliError::Partial {
            failed: index.failures.len(),
            total: manifest.records.len(),
            errors: index
                .failures
                .iter()
                .map(|f| format!("  [{}] {}: {}", f.index, f.path, f.error))
                .collect(),
        });
    }
    Ok(EncodeSummary {
        records: index.records.len(),
        unique: unique.len(),
        feature_dim: index.feature_dim,
        store: store.to_path_buf(),
    })
}
