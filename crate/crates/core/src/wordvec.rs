//! Static word vectors and max-pooled report vectors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::textprep::{preprocess_report, PreprocessConfig};
use crate::{Error, Result};

/// Text layout of a vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorFormat {
    /// First line is `V D`, then `word v1 .. vD`.
    Headered,
    /// Every line is `word v1 .. vD`; D comes from the first line.
    Headerless,
}

/// Vocabulary of fixed-dimension word vectors. Immutable once loaded.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    name: String,
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    duplicates: usize,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.words.len() == other.words.len()
            && self.words.iter().all(|w| self.get(w) == other.get(w))
    }
}

impl EmbeddingStore {
    pub fn new(name: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            duplicates: 0,
        })
    }

    /// Adds a word. Returns `Ok(false)` and keeps the earlier vector if the
    /// word is already present.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<bool> {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvariantViolation {
                path: format!("vocab[{word:?}]"),
                message: "words must be nonempty and whitespace-free".into(),
            });
        }
        if vector.len() != self.dim {
            return Err(Error::dim(self.dim, vector.len(), format!("word {word:?}")));
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(
                format!("word {word:?}"),
                format!("non-finite value {bad}"),
            ));
        }
        if self.index.contains_key(word) {
            self.duplicates += 1;
            return Ok(false);
        }
        self.index.insert(word.to_owned(), self.words.len());
        self.words.push(word.to_owned());
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of repeated words skipped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Words in load order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Writes the headered text format, entries in load order.
    pub fn write_headered<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        let mut line = String::new();
        for word in &self.words {
            line.clear();
            line.push_str(word);
            for v in self.get(word).unwrap() {
                write!(line, " {v}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_headered(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_headered(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Loads a text vector file. The store is named after the file stem.
pub fn load_embeddings(path: &Path, format: VectorFormat) -> Result<EmbeddingStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut store = read_embeddings(BufReader::new(file), format, &path.display().to_string())?;
    store.set_name(name);
    if store.is_empty() {
        return Err(Error::EmptyFile(path.to_owned()));
    }
    Ok(store)
}

/// Parses vector text from any reader. `source` labels error locations.
/// An empty result is not an error here; [`load_embeddings`] rejects it.
pub fn read_embeddings<R: BufRead>(reader: R, format: VectorFormat, source: &str) -> Result<EmbeddingStore> {
    let mut lines = reader.lines().enumerate();
    let mut declared: Option<(usize, usize)> = None;
    if format == VectorFormat::Headered {
        let Some((_, first)) = lines.next() else {
            return Err(Error::EmptyFile(source.into()));
        };
        let first = first.map_err(|e| Error::io(source, e))?;
        let fields: Vec<&str> = first.split_whitespace().collect();
        let [v, d] = fields[..] else {
            return Err(Error::parse(format!("{source}:1"), "header must be `V D`"));
        };
        let v: usize = v.parse().map_err(|e| Error::parse(format!("{source}:1"), e))?;
        let d: usize = d.parse().map_err(|e| Error::parse(format!("{source}:1"), e))?;
        declared = Some((v, d));
    }

    let mut store: Option<EmbeddingStore> = declared.map(|(_, d)| EmbeddingStore::new("", d)).transpose()?;
    let mut values = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        values.clear();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(format!("{source}:{lineno}"), format!("not a number: {field:?}")))?;
            values.push(v);
        }
        if store.is_none() {
            store = Some(
                EmbeddingStore::new("", values.len())
                    .map_err(|_| Error::parse(format!("{source}:{lineno}"), "line has no values"))?,
            );
        }
        let store = store.as_mut().unwrap();
        if values.len() != store.dim() {
            return Err(Error::dim(store.dim(), values.len(), format!("{source}:{lineno}")));
        }
        let inserted = store
            .insert(word, &values)
            .map_err(|e| e.context(format!("{source}:{lineno}")))?;
        if !inserted {
            log::warn!("{source}:{lineno}: duplicate word {word:?}, keeping first occurrence");
        }
    }
    let store = match store {
        Some(s) => s,
        None => return Err(Error::EmptyFile(source.into())),
    };
    if let Some((v, _)) = declared {
        if v != store.len() + store.duplicates() {
            log::warn!(
                "{source}: header declares {v} entries, file has {}",
                store.len() + store.duplicates()
            );
        }
    }
    Ok(store)
}

/// One row per in-vocabulary token, in token order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
    /// Tokens skipped because the store had no vector for them.
    #[serde(default)]
    pub oov_count: usize,
}

impl ReportMatrix {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("matrix dimension must be positive".into()));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::dim(dim, row.len(), format!("row {i}")));
        }
        Ok(Self {
            dim,
            rows,
            oov_count: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Result of pooling; `degenerate` marks an empty input matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledVector {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

pub fn embed_tokens<S: AsRef<str>>(store: &EmbeddingStore, tokens: &[S]) -> ReportMatrix {
    let mut rows = Vec::with_capacity(tokens.len());
    let mut oov_count = 0;
    for token in tokens {
        match store.get(token.as_ref()) {
            Some(v) => rows.push(v.to_vec()),
            None => oov_count += 1,
        }
    }
    ReportMatrix {
        dim: store.dim(),
        rows,
        oov_count,
    }
}

/// Column-wise maximum. An empty matrix pools to zeros with `degenerate` set.
pub fn max_pool(matrix: &ReportMatrix) -> PooledVector {
    let Some((first, rest)) = matrix.rows.split_first() else {
        return PooledVector {
            values: vec![0.0; matrix.dim],
            degenerate: true,
        };
    };
    let mut values = first.clone();
    for row in rest {
        for (m, &v) in values.iter_mut().zip(row) {
            if v > *m {
                *m = v;
            }
        }
    }
    PooledVector {
        values,
        degenerate: false,
    }
}

/// Preprocess, look up and pool a raw report.
pub fn embed_report(store: &EmbeddingStore, raw: &str, config: &PreprocessConfig) -> PooledVector {
    let tokens = preprocess_report(raw, config);
    let matrix = embed_tokens(store, &tokens);
    if matrix.oov_count > 0 {
        log::debug!(
            "{}: {}/{} tokens out of vocabulary",
            store.name(),
            matrix.oov_count,
            tokens.len()
        );
    }
    max_pool(&matrix)
}

/// Contextual-model output computed elsewhere: one row per token of one
/// report, stored as `{"report_id", "dim", "rows"}` JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedMatrix {
    pub report_id: String,
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl PrecomputedMatrix {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        parsed.validate().map_err(|e| e.context(path.display().to_string()))?;
        Ok(parsed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.dim {
                return Err(Error::dim(self.dim, row.len(), format!("row {i}")));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(format!("row {i}"), "non-finite value"));
            }
        }
        Ok(())
    }

    pub fn to_matrix(&self) -> ReportMatrix {
        ReportMatrix {
            dim: self.dim,
            rows: self.rows.clone(),
            oov_count: 0,
        }
    }
}
