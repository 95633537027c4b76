//! `fit` and `eval`: one classifier per fold, trained on `split=train` and
//! scored on `split=test`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use radam_core::classifier::{
    evaluate, lda_train, stack_rows, svm_train, AccuracyReport, ClassifierKind, ClassifierModel,
    FoldAccuracy,
};
use radam_core::tensorio::Split;

use crate::config::{Pooling, RunConfig};
use crate::error::{CliError, Result};
use crate::store::{StoreIndex, StoreRecord};

pub const TRAIN_REPORT: &str = "train_report.json";
pub const EVAL_REPORT: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub pooling: Pooling,
    pub classifier: ClassifierKind,
    pub folds: Vec<FoldAccuracy>,
    pub mean: f64,
    pub std: f64,
}

impl Report {
    fn new(pooling: Pooling, classifier: ClassifierKind, folds: Vec<FoldAccuracy>) -> Result<Self> {
        let AccuracyReport { folds, mean, std } = AccuracyReport::from_folds(folds)?;
        Ok(Report {
            pooling,
            classifier,
            folds,
            mean,
            std,
        })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// Plain-text table: one row per fold, then `mean ± std`.
    pub fn table(&self) -> String {
        let mut out = format!("{:>6}  {:>9}\n", "fold", "accuracy");
        for f in &self.folds {
            out += &format!("{:>6}  {:>9.4}\n", f.fold, f.accuracy);
        }
        out += &format!(
            "{} + {}: {:.4} ± {:.4} over {} fold(s)\n",
            self.pooling,
            self.classifier,
            self.mean,
            self.std,
            self.folds.len()
        );
        out
    }
}

/// Model directory of a fold; a fold-less store keeps its model at the root.
pub fn fold_dir(model_dir: &Path, fold: Option<u32>) -> PathBuf {
    match fold {
        Some(f) => model_dir.join(format!("fold_{f}")),
        None => model_dir.to_path_buf(),
    }
}

fn fold_label(fold: Option<u32>) -> String {
    fold.map_or_else(|| "(all)".to_string(), |f| f.to_string())
}

fn load_split(
    index: &StoreIndex,
    store: &Path,
    records: &[&StoreRecord],
) -> Result<(DMatrix<f64>, Vec<String>)> {
    let rows = records
        .iter()
        .map(|r| index.load_feature(store, r))
        .collect::<Result<Vec<_>>>()?;
    let labels = records.iter().map(|r| r.label.clone()).collect();
    Ok((stack_rows(&rows)?, labels))
}

fn open_store(cfg: &RunConfig) -> Result<StoreIndex> {
    let index = StoreIndex::load(&cfg.output_dir)?;
    index.check_files(&cfg.output_dir)?;
    Ok(index)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Report> {
    cfg.validate()?;
    let store = cfg.output_dir.as_path();
    let index = open_store(cfg)?;
    let model_dir = cfg.model_dir();

    let mut folds = Vec::new();
    for fold in index.folds()? {
        let train = index.select(fold, Split::Train);
        if train.is_empty() {
            return Err(CliError::validation(format!(
                "fold {} has no split=train records",
                fold_label(fold)
            )));
        }
        let (x, labels) = load_split(&index, store, &train)?;
        let model = match cfg.classifier {
            ClassifierKind::Svm => svm_train(&x, &labels, &cfg.svm())?,
            ClassifierKind::Lda => lda_train(&x, &labels, cfg.standardize)?,
        };
        let dir = fold_dir(&model_dir, fold);
        model.save(&dir)?;
        folds.push(FoldAccuracy {
            fold: fold.unwrap_or(0),
            accuracy: evaluate(&model, &x, &labels)?,
        });
    }

    let report = Report::new(index.pooling, cfg.classifier, folds)?;
    report.save(&model_dir.join(TRAIN_REPORT))?;
    Ok(report)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Report> {
    let store = cfg.output_dir.as_path();
    let index = open_store(cfg)?;
    let model_dir = cfg.model_dir();

    let mut kind = None;
    let mut folds = Vec::new();
    for fold in index.folds()? {
        let dir = fold_dir(&model_dir, fold);
        if !dir.join("model.json").is_file() {
            return Err(CliError::validation(format!(
                "no model for fold {} under {}; the store's folds do not match the fitted models",
                fold_label(fold),
                model_dir.display()
            )));
        }
        let model = ClassifierModel::load(&dir)?;
        if model.feature_dim() != index.feature_dim {
            return Err(CliError::validation(format!(
                "model in {} expects {} features, store has {}",
                dir.display(),
                model.feature_dim(),
                index.feature_dim
            )));
        }
        match kind {
            None => kind = Some(model.kind),
            Some(k) if k != model.kind => {
                return Err(CliError::validation(format!(
                    "fold models disagree on classifier kind ({k} vs {})",
                    model.kind
                )))
            }
            Some(_) => {}
        }
        let test = index.select(fold, Split::Test);
        if test.is_empty() {
            return Err(CliError::validation(format!(
                "fold {} has no split=test records",
                fold_label(fold)
            )));
        }
        let (x, labels) = load_split(&index, store, &test)?;
        folds.push(FoldAccuracy {
            fold: fold.unwrap_or(0),
            accuracy: evaluate(&model, &x, &labels)?,
        });
    }

    let kind = kind.ok_or_else(|| CliError::validation("store has no folds"))?;
    let report = Report::new(index.pooling, kind, folds)?;
    report.save(&model_dir.join(EVAL_REPORT))?;
    Ok(report)
}
