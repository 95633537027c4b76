//! Linear classifiers over image descriptors.
//!
//! The reference classifier is a one-vs-rest linear SVM (hinge loss, C = 1)
//! solved in the dual by coordinate descent, with the bias folded in as an
//! extra constant feature. A shrinkage LDA is provided as an alternative.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{read_tensor, write_tensor, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Svm,
    Lda,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Lda => "lda",
        })
    }
}

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// Population statistics; constant features keep scale 1.
    pub fn fit(features: &DMatrix<f64>) -> Scaler {
        let n = features.nrows() as f64;
        let (mean, scale) = features
            .column_iter()
            .map(|col| {
                let mu = col.sum() / n;
                let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
                (mu, if sd > 0.0 { sd } else { 1.0 })
            })
            .unzip();
        Scaler { mean, scale }
    }

    pub fn transform(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = features.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.scale[j]);
        }
        out
    }
}

/// One-vs-rest linear decision functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub classes: Vec<String>,
    /// `classes x features`.
    pub weights: DMatrix<f64>,
    pub biases: Vec<f64>,
    pub scaler: Option<Scaler>,
}

impl ClassifierModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Per-class decision values, `samples x classes`.
    pub fn decision_values(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.feature_dim() {
            return Err(Error::validation(format!(
                "model expects {} features, got {}",
                self.feature_dim(),
                features.ncols()
            )));
        }
        let mut scores = match &self.scaler {
            Some(s) => s.transform(features) * self.weights.transpose(),
            None => features * self.weights.transpose(),
        };
        for (k, mut col) in scores.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.biases[k]);
        }
        Ok(scores)
    }

    /// Argmax class per sample; ties go to the earlier class.
    pub fn predict(&self, features: &DMatrix<f64>) -> Result<Vec<String>> {
        let scores = self.decision_values(features)?;
        Ok(scores
            .row_iter()
            .map(|row| {
                let best = row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0;
                self.classes[best].clone()
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stop once the largest projected-gradient magnitude in a sweep is below this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Standardize features before training.
    pub standardize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-4,
            max_epochs: 1000,
            standardize: false,
        }
    }
}

/// A binary hinge-loss SVM solved in the dual.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual variables, each in `[0, C]`.
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

/// Dual coordinate descent for `min 1/2 |w|^2 + C sum max(0, 1 - y_i (w x_i + b))`
/// with the bias regularized as the weight of a constant feature 1.
///
/// `targets` are +1 / -1. Coordinates are visited in index order.
pub fn train_binary_svm(features: &DMatrix<f64>, targets: &[f64], params: &SvmParams) -> BinarySvm {
    let (n, d) = features.shape();
    let rows: Vec<Vec<f64>> = features
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let diag: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut alpha = vec![0.0; n];
    let c = params.c;
    let mut epochs = 0;
    let mut converged = false;

    while epochs < params.max_epochs {
        epochs += 1;
        let mut max_violation: f64 = 0.0;
        for i in 0..n {
            let y = targets[i];
            let x = &rows[i];
            let margin = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let grad = y * margin - 1.0;
            let projected = if alpha[i] <= 0.0 {
                grad.min(0.0)
            } else if alpha[i] >= c {
                grad.max(0.0)
            } else {
                grad
            };
            max_violation = max_violation.max(projected.abs());
            if projected != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - grad / diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y;
                if step != 0.0 {
                    w.iter_mut().zip(x).for_each(|(wj, xj)| *wj += step * xj);
                    b += step;
                }
            }
        }
        if max_violation <= params.tol {
            converged = true;
            break;
        }
    }
    BinarySvm {
        weights: w,
        bias: b,
        alpha,
        epochs,
        converged,
    }
}

fn validate_training_set(features: &DMatrix<f64>, labels: &[String]) -> Result<Vec<String>> {
    if features.nrows() != labels.len() {
        return Err(Error::validation(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("features contain non-finite values"));
    }
    let classes: Vec<String> = labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 classes, got {}",
            classes.len()
        )));
    }
    Ok(classes)
}

/// One-vs-rest linear SVM. Classes are ordered lexicographically.
pub fn svm_train(
    features: &DMatrix<f64>,
    labels: &[String],
    params: &SvmParams,
) -> Result<ClassifierModel> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::validation(format!(
            "C must be positive, got {}",
            params.c
        )));
    }
    let classes = validate_training_set(features, labels)?;
    let scaler = params.standardize.then(|| Scaler::fit(features));
    let x = match &scaler {
        Some(s) => s.transform(features),
        None => features.clone(),
    };

    // Solve on mean-centered rows and shift the bias back afterwards, so a
    // common offset in every feature vector does not enter the regularized
    // bias or the conditioning of the dual.
    let center: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut centered = x;
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }

    let mut weights = DMatrix::zeros(classes.len(), centered.ncols());
    let mut biases = Vec::with_capacity(classes.len());
    for (k, class) in classes.iter().enumerate() {
        let targets: Vec<f64> = labels
            .iter()
            .map(|l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let svm = train_binary_svm(&centered, &targets, params);
        let shift: f64 = svm.weights.iter().zip(&center).map(|(w, c)| w * c).sum();
        weights.row_mut(k).copy_from_slice(&svm.weights);
        biases.push(svm.bias - shift);
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::Svm,
        classes,
        weights,
        biases,
        scaler,
    })
}

/// Ledoit-Wolf shrinkage intensity toward `mu I` for already-centered rows.
pub fn ledoit_wolf_shrinkage(centered: &DMatrix<f64>) -> f64 {
    let (n, p) = centered.shape();
    let (nf, pf) = (n as f64, p as f64);
    let cov = centered.tr_mul(centered) / nf;
    let mu = cov.trace() / pf;
    let squared = centered.map(|v| v * v);
    // sum_k |x_k|^4
    let fourth: f64 = squared.row_iter().map(|r| r.sum().powi(2)).sum();
    let cov_sq = cov.norm_squared();

    let beta = ((fourth / nf - cov_sq) / (pf * nf)).max(0.0);
    let delta = (cov_sq - 2.0 * mu * cov.trace() + pf * mu * mu) / pf;
    if delta <= 0.0 {
        return 0.0;
    }
    beta.min(delta) / delta
}

/// Linear discriminant with a Ledoit-Wolf-shrunk pooled covariance.
///
/// Class scores are `x^T S^-1 mu_k - 1/2 mu_k^T S^-1 mu_k + ln prior_k`.
pub fn lda_train(
    features: &DMatrix<f64>,
    labels: &[String],
    standardize: bool,
) -> Result<ClassifierModel> {
    let classes = validate_training_set(features, labels)?;
    if features.nrows() <= classes.len() {
        return Err(Error::validation(format!(
            "LDA needs more samples ({}) than classes ({})",
            features.nrows(),
            classes.len()
        )));
    }
    let scaler = standardize.then(|| Scaler::fit(features));
    let x = match &scaler {
        Some(s) => s.transform(features),
        None => features.clone(),
    };
    let (n, p) = x.shape();
    let class_of: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label collected above"))
        .collect();

    let mut means = DMatrix::zeros(classes.len(), p);
    let mut counts = vec![0usize; classes.len()];
    for (i, &k) in class_of.iter().enumerate() {
        counts[k] += 1;
        let mut row = means.row_mut(k);
        row += x.row(i);
    }
    for (k, &count) in counts.iter().enumerate() {
        means.row_mut(k).scale_mut(1.0 / count as f64);
    }
    let mut centered = x.clone();
    for (i, &k) in class_of.iter().enumerate() {
        let mut row = centered.row_mut(i);
        row -= means.row(k);
    }

    let shrinkage = ledoit_wolf_shrinkage(&centered);
    let mut cov = centered.tr_mul(&centered) / n as f64;
    let mu = cov.trace() / p as f64;
    cov.scale_mut(1.0 - shrinkage);
    for j in 0..p {
        cov[(j, j)] += shrinkage * mu;
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::degenerate("shrunk covariance is not positive definite"))?;
    let weights = chol.solve(&means.transpose()).transpose();
    let biases = (0..classes.len())
        .map(|k| {
            let prior = counts[k] as f64 / n as f64;
            -0.5 * weights.row(k).dot(&means.row(k)) + prior.ln()
        })
        .collect();
    Ok(ClassifierModel {
        kind: ClassifierKind::Lda,
        classes,
        weights,
        biases,
        scaler,
    })
}

/// Fraction of matching labels.
pub fn accuracy(predicted: &[String], truth: &[String]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::validation("cannot score an empty split"));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn evaluate(
    model: &ClassifierModel,
    features: &DMatrix<f64>,
    labels: &[String],
) -> Result<f64> {
    accuracy(&model.predict(features)?, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAccuracy {
    pub fold: u32,
    pub accuracy: f64,
}

/// Per-fold accuracies with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub folds: Vec<FoldAccuracy>,
    pub mean: f64,
    pub std: f64,
}

impl AccuracyReport {
    pub fn from_folds(folds: Vec<FoldAccuracy>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::validation("no folds to summarize"));
        }
        let n = folds.len() as f64;
        let mean = folds.iter().map(|f| f.accuracy).sum::<f64>() / n;
        let var = folds
            .iter()
            .map(|f| (f.accuracy - mean).powi(2))
            .sum::<f64>()
            / n;
        Ok(AccuracyReport {
            folds,
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelSidecar {
    kind: ClassifierKind,
    classes: Vec<String>,
    feature_dim: usize,
    standardized: bool,
}

const WEIGHTS_FILE: &str = "weights.radt";
const BIASES_FILE: &str = "biases.radt";
const SCALER_MEAN_FILE: &str = "scaler_mean.radt";
const SCALER_SCALE_FILE: &str = "scaler_scale.radt";
const SIDECAR_FILE: &str = "model.json";

fn to_f32(values: impl IntoIterator<Item = f64>) -> Vec<f32> {
    values.into_iter().map(|v| v as f32).collect()
}

impl ClassifierModel {
    /// Write RADT weight and bias tensors plus a `model.json` sidecar into `dir`.
    ///
    /// Parameters are stored as binary32, so a reloaded model carries the
    /// rounded values.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (k, d) = self.weights.shape();
        let rows = to_f32(
            self.weights
                .row_iter()
                .flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        );
        write_tensor(&Tensor::new(vec![k, d], rows)?, dir.join(WEIGHTS_FILE))?;
        write_tensor(
            &Tensor::from_vec(to_f32(self.biases.iter().copied()))?,
            dir.join(BIASES_FILE),
        )?;
        if let Some(s) = &self.scaler {
            write_tensor(
                &Tensor::from_vec(to_f32(s.mean.iter().copied()))?,
                dir.join(SCALER_MEAN_FILE),
            )?;
            write_tensor(
                &Tensor::from_vec(to_f32(s.scale.iter().copied()))?,
                dir.join(SCALER_SCALE_FILE),
            )?;
        }
        let sidecar = ModelSidecar {
            kind: self.kind,
            classes: self.classes.clone(),
            feature_dim: d,
            standardized: self.scaler.is_some(),
        };
        let json =
            serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Parse(e.to_string()))?;
        let path = dir.join(SIDECAR_FILE);
        fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: ModelSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let k = sidecar.classes.len();
        let d = sidecar.feature_dim;

        let weights = read_tensor(dir.join(WEIGHTS_FILE))?;
        if weights.dims() != [k, d] {
            return Err(Error::Corruption(format!(
                "weights have dims {:?}, sidecar says [{k}, {d}]",
                weights.dims()
            )));
        }
        let weights = DMatrix::from_row_iterator(k, d, weights.data().iter().map(|&v| v as f64));
        let biases = read_vector(&dir.join(BIASES_FILE), k)?;
        let scaler = if sidecar.standardized {
            Some(Scaler {
                mean: read_vector(&dir.join(SCALER_MEAN_FILE), d)?,
                scale: read_vector(&dir.join(SCALER_SCALE_FILE), d)?,
            })
        } else {
            None
        };
        Ok(ClassifierModel {
            kind: sidecar.kind,
            classes: sidecar.classes,
            weights,
            biases,
            scaler,
        })
    }
}

fn read_vector(path: &Path, len: usize) -> Result<Vec<f64>> {
    let t = read_tensor(path)?;
    if t.dims() != [len] {
        return Err(Error::Corruption(format!(
            "{} has dims {:?}, expected [{len}]",
            path.display(),
            t.dims()
        )));
    }
    Ok(t.data().iter().map(|&v| v as f64).collect())
}

/// Stack row vectors into a `rows x dim` matrix.
pub fn stack_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
        return Err(Error::validation(format!(
            "feature {bad} has length {}, expected {dim}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        dim,
        rows.iter().flat_map(|r| r.iter().copied()),
    ))
}
