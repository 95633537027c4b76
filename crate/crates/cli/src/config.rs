use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use radam_core::classifier::{ClassifierKind, SvmParams};
use radam_core::rae::{RadamConfig, DEFAULT_SOUP_SIZE};
use radam_core::rng::LcgParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Radam,
    /// Global average pooling of the last block.
    Gap,
    /// Concatenated global average pooling of every block.
    #[value(name = "gap_agg")]
    GapAgg,
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pooling::Radam => "radam",
            Pooling::Gap => "gap",
            Pooling::GapAgg => "gap_agg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest_path: Option<PathBuf>,
    /// Feature store directory.
    pub output_dir: PathBuf,
    /// Classifier directory; defaults to `<output_dir>/model`.
    pub model_dir: Option<PathBuf>,
    pub m: usize,
    pub q: usize,
    pub lcg: LcgParams,
    /// States of the LCG stream skipped before the first encoder.
    pub lcg_offset: u64,
    pub ridge: f64,
    pub pooling: Pooling,
    pub classifier: ClassifierKind,
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub standardize: bool,
    /// Worker threads; `None` uses every logical core.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let svm = SvmParams::default();
        RunConfig {
            manifest_path: None,
            output_dir: PathBuf::from("features"),
            model_dir: None,
            m: DEFAULT_SOUP_SIZE,
            q: 1,
            lcg: LcgParams::ZX81,
            lcg_offset: 0,
            ridge: 0.0,
            pooling: Pooling::Radam,
            classifier: ClassifierKind::Svm,
            c: svm.c,
            tol: svm.tol,
            max_epochs: svm.max_epochs,
            standardize: svm.standardize,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(CliError::validation("--m must be at least 1"));
        }
        if self.q == 0 {
            return Err(CliError::validation("--q must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(CliError::validation(format!(
                "--c must be positive, got {}",
                self.c
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(CliError::validation(format!(
                "--tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_epochs == 0 {
            return Err(CliError::validation("--max-epochs must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        Ok(())
    }

    pub fn model_dir(&self) -> PathBuf {
        self.model_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("model"))
    }

    pub fn radam(&self) -> RadamConfig {
        RadamConfig {
            m: self.m,
            q: self.q,
            lcg: self.lcg.advanced(self.lcg_offset),
            ridge: self.ridge,
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            tol: self.tol,
            max_epochs: self.max_epochs,
            standardize: self.standardize,
        }
    }

    pub(crate) fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| CliError::validation(format!("cannot start worker pool: {e}")))
    }
}
