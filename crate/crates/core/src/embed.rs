//! Word-vector models and cosine relatedness.
//!
//! Vectors are held as `f32` (one `dim * 4`-byte row per token, plus the
//! token strings and two hash-map entries): a 300-dimension model costs
//! roughly 1.3 GB per million tokens.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorFormat {
    /// `count dim` header, then `token v1 .. vd` rows.
    Word2vecText,
    /// Header-less `token v1 .. vd` rows.
    GloveText,
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word2vec" | "word2vec_text" => Ok(VectorFormat::Word2vecText),
            "glove" | "glove_text" => Ok(VectorFormat::GloveText),
            other => Err(Error::invalid(format!("unknown vector format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub name: String,
    dim: usize,
    vectors: Vec<Vec<f32>>,
    norms: Vec<f64>,
    index: HashMap<String, usize>,
    /// lowercased token -> row, for case-insensitive fallback lookups
    lower_index: HashMap<String, usize>,
}

impl EmbeddingModel {
    /// Builds a model from `(token, vector)` rows. A repeated token replaces
    /// the earlier vector; all-zero rows are skipped since they have no
    /// direction.
    pub fn from_rows<I>(name: impl Into<String>, dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f32>)>,
    {
        let mut model = EmbeddingModel {
            name: name.into(),
            dim,
            vectors: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
            lower_index: HashMap::new(),
        };
        for (n, (token, vector)) in rows.into_iter().enumerate() {
            model.insert(token, vector, n + 1)?;
        }
        model.rebuild_lower_index();
        Ok(model)
    }

    fn insert(&mut self, token: String, vector: Vec<f32>, row: usize) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::data(format!(
                "row {row}: expected {} values, found {}",
                self.dim,
                vector.len()
            )));
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::data(format!("row {row}: non-finite value {v}")));
        }
        let norm = vector.iter().map(|v| f64::from(*v).powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            log::warn!("{}: row {row}: zero vector for {token:?} skipped", self.name);
            return Ok(());
        }
        match self.index.get(&token) {
            Some(&i) => {
                log::warn!("{}: row {row}: duplicate token {token:?}, keeping the later vector", self.name);
                self.vectors[i] = vector;
                self.norms[i] = norm;
            }
            None => {
                self.index.insert(token, self.vectors.len());
                self.vectors.push(vector);
                self.norms.push(norm);
            }
        }
        Ok(())
    }

    fn rebuild_lower_index(&mut self) {
        let mut rows: Vec<(&String, &usize)> = self.index.iter().collect();
        // first row wins among tokens that share a lowercase form
        rows.sort_by_key(|(_, i)| **i);
        self.lower_index.clear();
        for (token, &i) in rows {
            self.lower_index.entry(token.to_lowercase()).or_insert(i);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn lookup(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.lower_index.get(&word.to_lowercase()))
            .copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        self.lookup(word).map(|i| self.vectors[i].as_slice())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    /// Cosine similarity of the two words, or `None` (abstain) when either
    /// is out of vocabulary.
    pub fn relatedness(&self, w1: &str, w2: &str) -> Option<f64> {
        let a = self.lookup(w1)?;
        let b = self.lookup(w2)?;
        let dot: f64 = self.vectors[a]
            .iter()
            .zip(&self.vectors[b])
            .map(|(x, y)| f64::from(*x) * f64::from(*y))
            .sum();
        Some((dot / (self.norms[a] * self.norms[b])).clamp(-1.0, 1.0))
    }
}

pub fn load_vectors(path: &Path, format: VectorFormat) -> Result<EmbeddingModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut declared_count = None;
    let mut dim = None;
    let mut rows = Vec::new();

    if format == VectorFormat::Word2vecText {
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "missing `count dim` header"))?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let mut parts = header.split_whitespace();
        let parsed = (
            parts.next().and_then(|s| s.parse::<usize>().ok()),
            parts.next().and_then(|s| s.parse::<usize>().ok()),
            parts.next(),
        );
        match parsed {
            (Some(count), Some(d), None) if d > 0 => {
                declared_count = Some(count);
                dim = Some(d);
            }
            _ => return Err(Error::parse(path, 1, format!("bad header {header:?}, expected `count dim`"))),
        }
    }

    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| Error::parse(path, line_no, format!("bad value: {e}")))?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(Error::parse(
                path,
                line_no,
                format!("dimension mismatch: expected {d} values, found {}", values.len()),
            ));
        }
        rows.push((line_no, token.to_string(), values));
    }
    let dim = dim.ok_or_else(|| Error::data(format!("{}: no vectors", path.display())))?;
    if let Some(count) = declared_count {
        if count != rows.len() {
            log::warn!("{}: header declares {count} rows, found {}", path.display(), rows.len());
        }
    }

    let mut model = EmbeddingModel {
        name,
        dim,
        vectors: Vec::with_capacity(rows.len()),
        norms: Vec::with_capacity(rows.len()),
        index: HashMap::with_capacity(rows.len()),
        lower_index: HashMap::new(),
    };
    for (line_no, token, values) in rows {
        model
            .insert(token, values, line_no)
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
    }
    model.rebuild_lower_index();
    Ok(model)
}
