//! RADT binary tensor container and JSON-lines dataset manifests.
//!
//! Container layout, all integers little-endian `u32`:
//!
//! ```text
//! "RADT" | version | ndim | dims[ndim] | dtype_code | payload
//! ```
//!
//! The payload is `product(dims)` row-major little-endian binary32 values.
//! `dtype_code` 0 is the only defined dtype.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RADT";
pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;
pub const MAX_NDIM: usize = 4;

/// A dense row-major binary32 tensor with 1 to 4 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_NDIM {
            return Err(Error::validation(format!(
                "tensor rank must be 1..={MAX_NDIM}, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
            return Err(Error::validation(format!(
                "tensor dims must be in 1..=u32::MAX, got {dims:?}"
            )));
        }
        let expected = element_count(&dims)?;
        if expected != data.len() {
            return Err(Error::validation(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        let len = data.len();
        Tensor::new(vec![len], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Serialize into the RADT byte layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite value {} at flat index {pos}",
                self.data[pos]
            )));
        }
        let header = 4 + 4 + 4 + 4 * self.dims.len() + 4;
        let mut out = Vec::with_capacity(header + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&DTYPE_F32.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parse the RADT byte layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic = cursor
            .take(4)
            .ok_or_else(|| Error::Format("file shorter than magic".into()))?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"RADT\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = cursor.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let ndim = cursor.u32("ndim")? as usize;
        if ndim == 0 || ndim > MAX_NDIM {
            return Err(Error::Format(format!("ndim {ndim} outside 1..={MAX_NDIM}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = cursor.u32("dims")? as usize;
            if d == 0 {
                return Err(Error::Corruption("zero-length dimension".into()));
            }
            dims.push(d);
        }
        let dtype = cursor.u32("dtype_code")?;
        if dtype != DTYPE_F32 {
            return Err(Error::Format(format!("unsupported dtype code {dtype}")));
        }
        let count = element_count(&dims).map_err(|e| Error::Corruption(e.to_string()))?;
        let payload = &bytes[cursor.pos..];
        if payload.len() as u128 != count as u128 * 4 {
            return Err(Error::Corruption(format!(
                "dims {dims:?} need {} payload bytes, found {}",
                count as u128 * 4,
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }
}

fn element_count(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::validation(format!("dims {dims:?} overflow")))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        let b = self
            .take(4)
            .ok_or_else(|| Error::Corruption(format!("header truncated in {field}")))?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = tensor.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One manifest line as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLine {
    pub path: String,
    pub label: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<u32>,
}

/// A manifest record with its block files resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    /// Path as written in the manifest.
    pub path: String,
    pub label: String,
    pub split: Split,
    pub fold: Option<u32>,
    /// Block files in backbone order.
    pub blocks: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
    /// Number of blocks n shared by every record.
    pub block_count: usize,
}

impl DatasetManifest {
    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Resolve the block files of a record path.
///
/// A directory contributes every `*.radt` file inside it, ordered by natural
/// name order (`block_2` before `block_10`). A plain file is a single block.
pub fn resolve_blocks(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::validation(format!(
            "record path {} does not exist",
            path.display()
        )));
    }
    let entries = fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    let mut blocks = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "radt") {
            blocks.push(p);
        }
    }
    blocks.sort_by(|a, b| natural_cmp(&file_name(a), &file_name(b)));
    Ok(blocks)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Compare strings treating runs of ASCII digits as numbers.
fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    let (mut a, mut b) = (a.as_bytes(), b.as_bytes());
    loop {
        match (a.first(), b.first()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) if x.is_ascii_digit() && y.is_ascii_digit() => {
                let na = a.iter().take_while(|c| c.is_ascii_digit()).count();
                let nb = b.iter().take_while(|c| c.is_ascii_digit()).count();
                let (da, db) = (trim_zeros(&a[..na]), trim_zeros(&b[..nb]));
                let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db));
                if ord != Ordering::Equal {
                    return ord;
                }
                a = &a[na..];
                b = &b[nb..];
            }
            (Some(x), Some(y)) => {
                if x != y {
                    return x.cmp(y);
                }
                a = &a[1..];
                b = &b[1..];
            }
        }
    }
}

fn trim_zeros(digits: &[u8]) -> &[u8] {
    let start = digits.iter().take_while(|&&c| c == b'0').count();
    &digits[start..]
}

/// Read and validate a JSON-lines manifest. Relative record paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));

    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let record_path = base.join(&parsed.path);
        let blocks = resolve_blocks(&record_path)?;
        if blocks.is_empty() {
            return Err(Error::validation(format!(
                "{}:{}: record {} has no block files",
                path.display(),
                lineno + 1,
                parsed.path
            )));
        }
        records.push(Record {
            path: parsed.path,
            label: parsed.label,
            split: parsed.split,
            fold: parsed.fold,
            blocks,
        });
    }

    let Some(first) = records.first() else {
        return Err(Error::validation(format!(
            "manifest {} has no records",
            path.display()
        )));
    };
    let block_count = first.blocks.len();
    if let Some(bad) = records.iter().find(|r| r.blocks.len() != block_count) {
        return Err(Error::validation(format!(
            "record {} has {} blocks, expected {block_count}",
            bad.path,
            bad.blocks.len()
        )));
    }
    Ok(DatasetManifest {
        records,
        block_count,
    })
}

pub fn write_manifest(lines: &[ManifestLine], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Parse(e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
