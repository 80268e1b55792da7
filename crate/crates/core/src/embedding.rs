//! Embedding matrices, the EMB1 binary format, and dataset manifests.
//!
//! EMB1 layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |-------:|-----:|--------------------------------|
//! | 0      | 4    | magic `45 4D 42 31` (`"EMB1"`) |
//! | 4      | 2    | version, `1`                   |
//! | 6      | 1    | kind, `0` text / `1` image     |
//! | 7      | 1    | reserved, `0`                  |
//! | 8      | 4    | dim (`u32`, at least 1)        |
//! | 12     | 8    | count (`u64`)                  |
//! | 20     | 4·dim·count | row-major IEEE-754 `f32` |

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u16 = 1;
pub const EMB1_HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Text,
    Image,
}

impl EmbeddingKind {
    fn code(self) -> u8 {
        match self {
            EmbeddingKind::Text => 0,
            EmbeddingKind::Image => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(EmbeddingKind::Text),
            1 => Ok(EmbeddingKind::Image),
            other => Err(Error::Format(format!("unknown embedding kind {other}"))),
        }
    }
}

/// `count` rows of `dim` finite `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    kind: EmbeddingKind,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(kind: EmbeddingKind, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dim must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Argument(format!(
                "{} values do not fill rows of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(EmbeddingMatrix { dim, kind, data })
    }

    pub fn from_rows<R: AsRef<[f32]>>(kind: EmbeddingKind, dim: usize, rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Argument(format!(
                    "row {i} has {} values, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(kind, dim, data)
    }

    pub fn empty(kind: EmbeddingKind, dim: usize) -> Result<Self> {
        Self::new(kind, dim, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// The first `n` rows.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.count() {
            return Err(Error::Data(format!(
                "requested {n} rows from a matrix with {}",
                self.count()
            )));
        }
        Ok(EmbeddingMatrix {
            dim: self.dim,
            kind: self.kind,
            data: self.data[..n * self.dim].to_vec(),
        })
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.count() {
                return Err(Error::Argument(format!(
                    "row {i} out of range for {} rows",
                    self.count()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(EmbeddingMatrix {
            dim: self.dim,
            kind: self.kind,
            data,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(EMB1_HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(&EMB1_MAGIC);
        out.extend_from_slice(&EMB1_VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.push(0);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < EMB1_HEADER_LEN {
            if bytes.len() >= 4 && bytes[..4] != EMB1_MAGIC {
                return Err(Error::Format("bad EMB1 magic".into()));
            }
            return Err(Error::Corruption(format!(
                "EMB1 header needs {EMB1_HEADER_LEN} bytes, found {}",
                bytes.len()
            )));
        }
        if bytes[..4] != EMB1_MAGIC {
            return Err(Error::Format("bad EMB1 magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != EMB1_VERSION {
            return Err(Error::Format(format!("unsupported EMB1 version {version}")));
        }
        let kind = EmbeddingKind::from_code(bytes[6])?;
        if bytes[7] != 0 {
            return Err(Error::Format(format!("EMB1 reserved byte is {}", bytes[7])));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("EMB1 dim is 0".into()));
        }
        let payload = &bytes[EMB1_HEADER_LEN..];
        let expected = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Corruption(format!("EMB1 size {count}x{dim} overflows")))?;
        if payload.len() != expected {
            return Err(Error::Corruption(format!(
                "EMB1 payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(kind, dim, data)
    }
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&m.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corruption(m) => Error::Corruption(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Divides every row by its Euclidean norm (computed in `f64`).
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.rows().enumerate() {
        let norm = row_norm(row);
        if norm == 0.0 {
            return Err(Error::Data(format!("row {i} has zero norm")));
        }
        data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        dim: m.dim,
        kind: m.kind,
        data,
    })
}

pub(crate) fn row_norm(row: &[f32]) -> f64 {
    row.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
}

/// Unit-normalized `f64` copy of one vector.
pub fn unit_vector(v: &[f32]) -> Result<Vec<f64>> {
    let norm = row_norm(v);
    if norm == 0.0 {
        return Err(Error::Data("vector has zero norm".into()));
    }
    Ok(v.iter().map(|&x| f64::from(x) / norm).collect())
}

/// Normal and anomalous text embeddings where row `i` of each came from
/// prompt pair `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEmbeddingSet {
    normals: EmbeddingMatrix,
    anomalies: EmbeddingMatrix,
}

impl PairedEmbeddingSet {
    pub fn new(normals: EmbeddingMatrix, anomalies: EmbeddingMatrix) -> Result<Self> {
        if normals.dim() != anomalies.dim() {
            return Err(Error::Data(format!(
                "normal embeddings have dim {}, anomalous {}",
                normals.dim(),
                anomalies.dim()
            )));
        }
        if normals.count() != anomalies.count() {
            return Err(Error::Data(format!(
                "{} normal rows but {} anomalous rows",
                normals.count(),
                anomalies.count()
            )));
        }
        Ok(PairedEmbeddingSet { normals, anomalies })
    }

    pub fn load(normals: &Path, anomalies: &Path) -> Result<Self> {
        Self::new(read_embeddings(normals)?, read_embeddings(anomalies)?)
    }

    pub fn normals(&self) -> &EmbeddingMatrix {
        &self.normals
    }

    pub fn anomalies(&self) -> &EmbeddingMatrix {
        &self.anomalies
    }

    pub fn len(&self) -> usize {
        self.normals.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.normals.dim()
    }

    /// The first `n` pairs.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Ok(PairedEmbeddingSet {
            normals: self.normals.truncated(n)?,
            anomalies: self.anomalies.truncated(n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u8,
    pub category: String,
}

/// Evaluation images with labels (0 normal, 1 anomalous) and categories.
///
/// Entry order is the row order of the companion image-embedding file.
/// `refs` lists few-shot reference normals per category; the companion
/// reference-embedding file holds them category by category in sorted
/// category order, each list in its stored order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ManifestRepr", into = "ManifestRepr")]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    refs: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct ManifestRepr {
    entries: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    refs: BTreeMap<String, Vec<String>>,
}

impl TryFrom<ManifestRepr> for DatasetManifest {
    type Error = Error;

    fn try_from(r: ManifestRepr) -> Result<Self> {
        DatasetManifest::new(r.entries, r.refs)
    }
}

impl From<DatasetManifest> for ManifestRepr {
    fn from(m: DatasetManifest) -> Self {
        ManifestRepr {
            entries: m.entries,
            refs: m.refs,
        }
    }
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, refs: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.label > 1 {
                return Err(Error::Data(format!(
                    "entry {i} ({}) has label {}, expected 0 or 1",
                    e.path, e.label
                )));
            }
            if e.category.is_empty() {
                return Err(Error::Data(format!("entry {i} ({}) has no category", e.path)));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Data(format!("duplicate path {}", e.path)));
            }
        }
        let mut seen_refs = HashSet::new();
        for (cat, paths) in &refs {
            if cat.is_empty() {
                return Err(Error::Data("reference list with empty category".into()));
            }
            for p in paths {
                if !seen_refs.insert(p.as_str()) {
                    return Err(Error::Data(format!("duplicate reference path {p}")));
                }
            }
        }
        Ok(DatasetManifest { entries, refs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            // Validation failures surface through serde as custom messages.
            Error::Data(format!("{}: {e}", path.display()))
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn refs(&self) -> &BTreeMap<String, Vec<String>> {
        &self.refs
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.label).collect()
    }

    /// Categories in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.iter().any(|c| c == &e.category) {
                out.push(e.category.clone());
            }
        }
        out
    }

    /// Row range of each category's references in the reference-embedding file.
    pub fn ref_rows(&self) -> BTreeMap<&str, std::ops::Range<usize>> {
        let mut start = 0;
        self.refs
            .iter()
            .map(|(c, paths)| {
                let r = start..start + paths.len();
                start = r.end;
                (c.as_str(), r)
            })
            .collect()
    }

    pub fn ref_count(&self) -> usize {
        self.refs.values().map(Vec::len).sum()
    }

    /// Same manifest with every label flipped.
    pub fn with_flipped_labels(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                label: 1 - e.label,
                ..e.clone()
            })
            .collect();
        DatasetManifest {
            entries,
            refs: self.refs.clone(),
        }
    }

    /// Resolves entry paths against `root` when they are relative.
    pub fn resolve(&self, root: &Path, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            root.join(p)
        }
    }
}
