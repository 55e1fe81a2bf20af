//! Embedding sets and the `.emb` + `.meta.json` interchange format.
//!
//! A set is stored as two files sharing a stem:
//!
//! * `<name>.emb`: a 16-byte header (`b"EMB1"`, then `n`, `d` and `flags` as
//!   little-endian `u32`) followed by `n * d` little-endian `f32` values in
//!   row-major order.
//! * `<name>.meta.json`: `{"n", "d", "ids", "labels"?, "texts"?}`.
//!
//! Vectors are held in memory as `f64`, but every value is kept exactly
//! representable as `f32` so that a save/load round trip is bit-exact.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 16;
pub const FLAG_LABELS: u32 = 1;
pub const FLAG_TEXTS: u32 = 1 << 1;

const STD_FLOOR: f64 = 1e-12;

/// Ground-truth class labels, relabeled onto the contiguous range `0..k`.
///
/// Only the simulated judges and the evaluation code read these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    values: Vec<usize>,
    original: Vec<u64>,
}

impl Labels {
    /// Relabels `raw` by sorting the distinct values and mapping each to its rank.
    pub fn from_raw(raw: &[u64]) -> Self {
        let mut original: Vec<u64> = raw.to_vec();
        original.sort_unstable();
        original.dedup();
        let rank: HashMap<u64, usize> = original.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let values = raw.iter().map(|v| rank[v]).collect();
        Labels { values, original }
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn get(&self, i: usize) -> usize {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of distinct classes.
    pub fn num_classes(&self) -> usize {
        self.original.len()
    }

    /// `mapping()[new] == raw` for every relabeled class.
    pub fn mapping(&self) -> &[u64] {
        &self.original
    }

    pub fn raw(&self) -> Vec<u64> {
        self.values.iter().map(|&v| self.original[v]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Array2<f64>,
    texts: Option<Vec<String>>,
    labels: Option<Labels>,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingSet {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.vectors == other.vectors
            && self.texts == other.texts
            && self.labels == other.labels
    }
}

impl EmbeddingSet {
    /// Builds a validated set. Values are rounded to `f32` precision.
    pub fn new(ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        let (n, d) = vectors.dim();
        if n < 2 {
            return Err(Error::load("embedding set", format!("need at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(Error::load("embedding set", "dimension must be at least 1"));
        }
        if ids.len() != n {
            return Err(Error::load(
                "embedding set",
                format!("{} ids for {} rows", ids.len(), n),
            ));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if let Some(prev) = index.insert(id.clone(), i) {
                return Err(Error::load(
                    "embedding set",
                    format!("duplicate id {id:?} at rows {prev} and {i}"),
                ));
            }
        }
        let mut vectors = vectors;
        for ((i, j), v) in vectors.indexed_iter_mut() {
            if !v.is_finite() || !(*v as f32).is_finite() {
                return Err(Error::load(
                    "embedding set",
                    format!("row {i} (id {:?}), column {j} is not finite", ids[i]),
                ));
            }
            *v = *v as f32 as f64;
        }
        Ok(EmbeddingSet {
            ids,
            vectors,
            texts: None,
            labels: None,
            index,
        })
    }

    /// Builds a set with ids `"0"`, `"1"`, ...
    pub fn from_vectors(vectors: Array2<f64>) -> Result<Self> {
        let ids = (0..vectors.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, vectors)
    }

    pub fn with_texts(mut self, texts: Vec<String>) -> Result<Self> {
        if texts.len() != self.n() {
            return Err(Error::load(
                "embedding set",
                format!("{} texts for {} rows", texts.len(), self.n()),
            ));
        }
        self.texts = Some(texts);
        Ok(self)
    }

    pub fn with_raw_labels(self, raw: &[u64]) -> Result<Self> {
        if raw.len() != self.n() {
            return Err(Error::load(
                "embedding set",
                format!("{} labels for {} rows", raw.len(), self.n()),
            ));
        }
        Ok(self.with_labels(Labels::from_raw(raw)))
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        assert_eq!(labels.len(), self.n(), "label count must match row count");
        self.labels = Some(labels);
        self
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Same ids, texts and labels over new vectors of any dimension.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != self.n() {
            return Err(Error::arg(format!(
                "replacement has {} rows, set has {}",
                vectors.nrows(),
                self.n()
            )));
        }
        let mut out = Self::new(self.ids.clone(), vectors)?;
        out.texts = self.texts.clone();
        out.labels = self.labels.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn texts(&self) -> Option<&[String]> {
        self.texts.as_deref()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    fn flags(&self) -> u32 {
        let mut flags = 0;
        if self.labels.is_some() {
            flags |= FLAG_LABELS;
        }
        if self.texts.is_some() {
            flags |= FLAG_TEXTS;
        }
        flags
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    n: usize,
    d: usize,
    ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    texts: Option<Vec<String>>,
}

/// Path of the matrix file for a stem or `.emb` path.
pub fn matrix_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "emb") {
        path.to_path_buf()
    } else {
        let mut s = path.as_os_str().to_owned();
        s.push(".emb");
        PathBuf::from(s)
    }
}

/// Path of the JSON sidecar for a stem or `.emb` path.
pub fn meta_path(path: &Path) -> PathBuf {
    let m = matrix_path(path);
    m.with_extension("meta.json")
}

/// Header fields of an `.emb` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n: u32,
    pub d: u32,
    pub flags: u32,
}

/// Decodes an `.emb` byte buffer into its header and row-major values.
pub fn decode_matrix(bytes: &[u8], context: &str) -> Result<(Header, Vec<f32>)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::load(context, format!("file is {} bytes, header needs 16", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::load(context, "bad magic, expected \"EMB1\""));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let header = Header {
        n: word(4),
        d: word(8),
        flags: word(12),
    };
    let expected = header.n as usize * header.d as usize * 4;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::load(
            context,
            format!(
                "header declares {}x{} ({} bytes of data) but file holds {} bytes",
                header.n,
                header.d,
                expected,
                body.len()
            ),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

pub fn encode_matrix(vectors: &Array2<f64>, flags: u32) -> Vec<u8> {
    let (n, d) = vectors.dim();
    let mut out = Vec::with_capacity(HEADER_LEN + n * d * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    for v in vectors.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Loads a set from `<stem>.emb` and `<stem>.meta.json`.
pub fn load_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    load_with_meta(matrix_path(path), meta_path(path))
}

/// Loads a set from an explicit matrix file and sidecar.
pub fn load_with_meta(matrix: impl AsRef<Path>, meta: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let (matrix, meta) = (matrix.as_ref(), meta.as_ref());
    let bytes = fs::read(matrix).map_err(|e| Error::io(matrix, e))?;
    let ctx = matrix.display().to_string();
    let (header, values) = decode_matrix(&bytes, &ctx)?;

    let meta_text = fs::read_to_string(meta).map_err(|e| Error::io(meta, e))?;
    let meta_ctx = meta.display().to_string();
    let meta: Meta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::load(&meta_ctx, format!("malformed sidecar: {e}")))?;

    let (n, d) = (header.n as usize, header.d as usize);
    if meta.n != n || meta.d != d {
        return Err(Error::load(
            &meta_ctx,
            format!("sidecar declares {}x{}, matrix header {}x{}", meta.n, meta.d, n, d),
        ));
    }
    if meta.ids.len() != n {
        return Err(Error::load(&meta_ctx, format!("{} ids for {} rows", meta.ids.len(), n)));
    }
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            let (r, c) = (i / d, i % d);
            return Err(Error::load(
                &ctx,
                format!("row {r} (id {:?}), column {c} is not finite", meta.ids[r]),
            ));
        }
    }
    let vectors = Array2::from_shape_vec((n, d), values.into_iter().map(f64::from).collect())
        .expect("shape checked against header");
    let mut set = EmbeddingSet::new(meta.ids, vectors).map_err(|e| match e {
        Error::Load { message, .. } => Error::load(&meta_ctx, message),
        other => other,
    })?;
    if let Some(labels) = meta.labels {
        set = set
            .with_raw_labels(&labels)
            .map_err(|_| Error::load(&meta_ctx, format!("{} labels for {} rows", labels.len(), n)))?;
    }
    if let Some(texts) = meta.texts {
        set = set
            .with_texts(texts)
            .map_err(|e| Error::load(&meta_ctx, e.to_string()))?;
    }
    Ok(set)
}

/// Writes `<stem>.emb` and `<stem>.meta.json`.
pub fn save_embedding_set(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (mpath, jpath) = (matrix_path(path), meta_path(path));
    if let Some(dir) = mpath.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&mpath, encode_matrix(&set.vectors, set.flags())).map_err(|e| Error::io(&mpath, e))?;

    let meta = Meta {
        n: set.n(),
        d: set.d(),
        ids: set.ids.clone(),
        labels: set.labels.as_ref().map(Labels::raw),
        texts: set.texts.clone(),
    };
    let file = fs::File::create(&jpath).map_err(|e| Error::io(&jpath, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &meta)?;
    w.flush().map_err(|e| Error::io(&jpath, e))?;
    Ok(())
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit(vectors: &Array2<f64>) -> Self {
        let n = vectors.nrows() as f64;
        let mean: Array1<f64> = vectors.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(vectors.ncols());
        for row in vectors.rows() {
            var.zip_mut_with(&(&row - &mean), |v, x| *v += x * x);
        }
        let std = var.mapv(|v| (v / n).sqrt());
        StandardizationStats {
            mean: mean.to_vec(),
            std: std.to_vec(),
        }
    }

    fn scale(&self, j: usize) -> f64 {
        if self.std[j] < STD_FLOOR {
            1.0
        } else {
            self.std[j]
        }
    }

    pub fn apply(&self, vectors: &Array2<f64>) -> Array2<f64> {
        let mut out = vectors.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale(j);
            }
        }
        out
    }

    pub fn invert(&self, vectors: &Array2<f64>) -> Array2<f64> {
        let mut out = vectors.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale(j) + self.mean[j];
            }
        }
        out
    }
}

/// Centers every dimension and scales it to unit population variance.
/// Constant dimensions are only centered.
pub fn standardize(set: &EmbeddingSet) -> Result<(EmbeddingSet, StandardizationStats)> {
    let stats = StandardizationStats::fit(set.vectors());
    let out = set.with_vectors(stats.apply(set.vectors()))?;
    Ok((out, stats))
}
