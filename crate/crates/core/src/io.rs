//! On-disk representations shared with the embedding exporter.
//!
//! * Embeddings: a 21-byte header (`"TPCL"`, `u32` version, `u64` rows,
//!   `u32` columns, `u8` stage code) followed by row-major little-endian `f32`.
//! * Corpus: JSON Lines with `doc_id`, `text` and an optional `gold_label`
//!   (plus an optional `label_name` naming that label).
//! * Assignments: CSV with header `doc_index,topic[,p0,..,p{K-1}]`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::text::tokenize;

pub const MAGIC: &[u8; 4] = b"TPCL";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

/// Tolerance on unit row norms for matrices built in memory.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Unit-norm tolerance applied to matrices decoded from `f32` storage.
const UNIT_NORM_TOL_F32: f64 = 1e-6;

/// Which step of the pipeline produced a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    PcaD,
    Normalized,
    FeatureK1,
}

impl Stage {
    pub fn code(self) -> u8 {
        match self {
            Stage::Raw => 0,
            Stage::PcaD => 1,
            Stage::Normalized => 2,
            Stage::FeatureK1 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Stage::Raw),
            1 => Ok(Stage::PcaD),
            2 => Ok(Stage::Normalized),
            3 => Ok(Stage::FeatureK1),
            other => Err(Error::UnknownStage(other)),
        }
    }
}

/// Dense row-per-document matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: DMatrix<f64>,
    stage: Stage,
}

impl EmbeddingMatrix {
    pub fn new(data: DMatrix<f64>, stage: Stage) -> Result<Self> {
        Self::validated(data, stage, UNIT_NORM_TOL)
    }

    fn validated(data: DMatrix<f64>, stage: Stage, norm_tol: f64) -> Result<Self> {
        for row in 0..data.nrows() {
            for col in 0..data.ncols() {
                if !data[(row, col)].is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        if stage == Stage::Normalized {
            for (row, r) in data.row_iter().enumerate() {
                let norm = r.norm();
                if (norm - 1.0).abs() > norm_tol {
                    return Err(Error::NotNormalized { row, norm });
                }
            }
        }
        Ok(Self { data, stage })
    }

    /// Builds a matrix from row vectors, which must all share one length.
    pub fn from_rows(rows: &[Vec<f64>], stage: Stage) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let data = DMatrix::from_fn(n, dim, |i, j| rows[i][j]);
        Self::new(data, stage)
    }

    pub fn n_docs(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Relabels the stage without touching the data. Fails if the new stage
    /// is `Normalized` and the rows are not unit length.
    pub fn with_stage(self, stage: Stage) -> Result<Self> {
        Self::new(self.data, stage)
    }
}

/// Writes `m` in the binary embedding format.
pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(HEADER_LEN + m.n_docs() * m.dim() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(m.n_docs() as u64).to_le_bytes());
    let dim = u32::try_from(m.dim())
        .map_err(|_| Error::InvalidArgument(format!("dimension {} exceeds u32", m.dim())))?;
    bytes.extend_from_slice(&dim.to_le_bytes());
    bytes.push(m.stage().code());
    for (row, r) in m.data().row_iter().enumerate() {
        for (col, &v) in r.iter().enumerate() {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            bytes.extend_from_slice(&f.to_le_bytes());
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a binary embedding file, rejecting malformed or non-finite content.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes)
}

/// Decodes the binary embedding format from memory.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                found: bytes[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n_docs = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as u64;
    let stage = Stage::from_code(bytes[20])?;

    let expected = n_docs
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::InvalidArgument("header sizes overflow".into()))?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingData { expected, found });
    }

    let (n, d) = (n_docs as usize, dim as usize);
    let payload = &bytes[HEADER_LEN..];
    let mut data = DMatrix::zeros(n, d);
    for (idx, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        let (row, col) = (idx / d, idx % d);
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
        data[(row, col)] = f64::from(v);
    }
    EmbeddingMatrix::validated(data, stage, UNIT_NORM_TOL_F32)
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub gold_label: Option<usize>,
}

/// Ordered documents with optional dense gold labels.
#[derive(Debug)]
pub struct Corpus {
    docs: Vec<Document>,
    label_names: Option<Vec<String>>,
    tokens: OnceLock<Vec<Vec<String>>>,
}

impl Clone for Corpus {
    fn clone(&self) -> Self {
        Self {
            docs: self.docs.clone(),
            label_names: self.label_names.clone(),
            tokens: OnceLock::new(),
        }
    }
}

impl Corpus {
    pub fn new(docs: Vec<Document>, label_names: Option<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::DuplicateDocId {
                    doc_id: d.doc_id.clone(),
                    line: i + 1,
                });
            }
        }
        if let Some(first) = docs.first() {
            let labeled = first.gold_label.is_some();
            if let Some(i) = docs.iter().position(|d| d.gold_label.is_some() != labeled) {
                return Err(Error::PartialGoldLabels { line: i + 1 });
            }
        }
        if let Some(names) = &label_names {
            for (i, d) in docs.iter().enumerate() {
                if let Some(l) = d.gold_label.filter(|&l| l >= names.len()) {
                    return Err(Error::GoldLabelOutOfRange {
                        label: l,
                        line: i + 1,
                        n_labels: names.len(),
                    });
                }
            }
        }
        Ok(Self {
            docs,
            label_names,
            tokens: OnceLock::new(),
        })
    }

    /// Convenience constructor for unlabeled text.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document {
                doc_id: i.to_string(),
                text: t.as_ref().to_string(),
                gold_label: None,
            })
            .collect();
        Self::new(docs, None).expect("generated ids are unique")
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    /// Dense gold labels, when the corpus carries them.
    pub fn gold_labels(&self) -> Option<Vec<usize>> {
        if self.docs.is_empty() {
            return None;
        }
        self.docs.iter().map(|d| d.gold_label).collect()
    }

    /// Number of gold categories L: the name count when names are known,
    /// otherwise one past the largest label.
    pub fn n_labels(&self) -> Option<usize> {
        let labels = self.gold_labels()?;
        Some(match &self.label_names {
            Some(names) => names.len(),
            None => labels.iter().max().map_or(0, |m| m + 1),
        })
    }

    /// Tokenized documents, computed once and cached.
    pub fn tokens(&self) -> &[Vec<String>] {
        self.tokens
            .get_or_init(|| self.docs.iter().map(|d| tokenize(&d.text)).collect())
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    doc_id: String,
    text: String,
    #[serde(default)]
    gold_label: Option<usize>,
    #[serde(default)]
    label_name: Option<String>,
}

/// Reads a JSON-Lines corpus. Blank lines are skipped.
///
/// When lines carry `label_name`, the names are collected into
/// `label_names` indexed by `gold_label`; a label mapped to two different
/// names is rejected.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut names: HashMap<usize, String> = HashMap::new();
    let mut any_name = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(name) = rec.label_name {
            let label = rec.gold_label.ok_or_else(|| Error::MalformedLine {
                line: line_no,
                message: "label_name without gold_label".into(),
            })?;
            any_name = true;
            match names.get(&label) {
                Some(existing) if *existing != name => {
                    return Err(Error::MalformedLine {
                        line: line_no,
                        message: format!("label {label} named both {existing:?} and {name:?}"),
                    })
                }
                Some(_) => {}
                None => {
                    names.insert(label, name);
                }
            }
        }
        docs.push(Document {
            doc_id: rec.doc_id,
            text: rec.text,
            gold_label: rec.gold_label,
        });
    }
    let label_names = if any_name {
        let n = names.keys().max().map_or(0, |m| m + 1);
        let list: Option<Vec<String>> = (0..n).map(|l| names.get(&l).cloned()).collect();
        Some(list.ok_or_else(|| Error::MalformedLine {
            line: 0,
            message: "label names must cover every label from 0 to the largest".into(),
        })?)
    } else {
        None
    };
    Corpus::new(docs, label_names)
}

/// Hard topic assignment with optional posterior matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicAssignment {
    h: Vec<usize>,
    gamma: Option<DMatrix<f64>>,
    k: usize,
}

impl TopicAssignment {
    pub fn new(h: Vec<usize>, gamma: Option<DMatrix<f64>>, k: usize) -> Result<Self> {
        if let Some((row, &topic)) = h.iter().enumerate().find(|(_, &t)| t >= k) {
            return Err(Error::TopicOutOfRange { topic, row, k });
        }
        if let Some(g) = &gamma {
            if g.nrows() != h.len() {
                return Err(Error::LengthMismatch {
                    left: h.len(),
                    right: g.nrows(),
                });
            }
            if g.ncols() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: g.ncols(),
                });
            }
            for (n, row) in g.row_iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "posterior row {n} is not a distribution (sum {sum})"
                    )));
                }
                if argmax(row.iter().copied()) != h[n] {
                    return Err(Error::InvalidArgument(format!(
                        "h[{n}] = {} is not the posterior argmax",
                        h[n]
                    )));
                }
            }
        }
        Ok(Self { h, gamma, k })
    }

    /// Hard assignment whose topic count is one past the largest label.
    pub fn from_labels(h: Vec<usize>) -> Self {
        let k = h.iter().max().map_or(0, |m| m + 1);
        Self { h, gamma: None, k }
    }

    pub fn h(&self) -> &[usize] {
        &self.h
    }

    pub fn gamma(&self) -> Option<&DMatrix<f64>> {
        self.gamma.as_ref()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Writes an assignment CSV (LF line endings).
pub fn write_assignment(a: &TopicAssignment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    let mut header = String::from("doc_index,topic");
    if a.gamma.is_some() {
        for j in 0..a.k {
            header.push_str(&format!(",p{j}"));
        }
    }
    writeln!(w, "{header}").map_err(io_err)?;
    for (n, &topic) in a.h.iter().enumerate() {
        let mut line = format!("{n},{topic}");
        if let Some(g) = &a.gamma {
            for j in 0..a.k {
                line.push_str(&format!(",{}", g[(n, j)]));
            }
        }
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads an assignment CSV. With posterior columns, K is their count;
/// otherwise K is one past the largest topic.
pub fn read_assignment(path: impl AsRef<Path>) -> Result<TopicAssignment> {
    read_assignment_impl(path.as_ref(), None)
}

/// Reads an assignment CSV whose topics must lie in `[0, k)`.
pub fn read_assignment_with_k(path: impl AsRef<Path>, k: usize) -> Result<TopicAssignment> {
    read_assignment_impl(path.as_ref(), Some(k))
}

fn read_assignment_impl(path: &Path, k: Option<usize>) -> Result<TopicAssignment> {
    let malformed = |m: String| Error::MalformedAssignment(m);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| malformed(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| malformed(e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "doc_index" || &headers[1] != "topic" {
        return Err(malformed("header must start with doc_index,topic".into()));
    }
    let n_gamma = headers.len() - 2;
    for (j, name) in headers.iter().skip(2).enumerate() {
        if name != format!("p{j}") {
            return Err(malformed(format!("unexpected column {name:?}")));
        }
    }
    if let (Some(k), true) = (k, n_gamma > 0) {
        if k != n_gamma {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: n_gamma,
            });
        }
    }

    let mut h = Vec::new();
    let mut probs = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| malformed(e.to_string()))?;
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| malformed(format!("row {row}: bad doc_index {:?}", &rec[0])))?;
        if idx != row {
            return Err(malformed(format!(
                "row {row}: doc_index {idx} out of order"
            )));
        }
        let topic: usize = rec[1]
            .parse()
            .map_err(|_| malformed(format!("row {row}: bad topic {:?}", &rec[1])))?;
        h.push(topic);
        for j in 0..n_gamma {
            let p: f64 = rec[2 + j]
                .parse()
                .map_err(|_| malformed(format!("row {row}: bad posterior {:?}", &rec[2 + j])))?;
            probs.push(p);
        }
    }
    let k = match (k, n_gamma) {
        (Some(k), _) => k,
        (None, 0) => h.iter().max().map_or(0, |m| m + 1),
        (None, g) => g,
    };
    let gamma = (n_gamma > 0).then(|| DMatrix::from_row_slice(h.len(), n_gamma, &probs));
    TopicAssignment::new(h, gamma, k)
}
