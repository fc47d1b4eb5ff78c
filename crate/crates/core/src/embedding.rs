//! Embedding matrices, modality tags, z-score fusion, and the JSONL
//! interchange format (`{"doc_id": ..., "modality": ..., "vector": [...]}`
//! per line).
//!
//! The upstream encoders (layout autoencoder, CLIP, sentence embeddings,
//! pooled VLM states) live outside this crate; everything here treats their
//! output as opaque row vectors.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Source of an embedding row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Layout,
    Clip,
    Sentence,
    Pooled,
    /// z-score concatenation of other modalities.
    Combined,
    /// Output of dimensionality reduction.
    Reduced,
}

impl Modality {
    pub const ALL: [Modality; 6] = [
        Modality::Layout,
        Modality::Clip,
        Modality::Sentence,
        Modality::Pooled,
        Modality::Combined,
        Modality::Reduced,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Layout => "layout",
            Modality::Clip => "clip",
            Modality::Sentence => "sentence",
            Modality::Pooled => "pooled",
            Modality::Combined => "combined",
            Modality::Reduced => "reduced",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "layout" => Ok(Modality::Layout),
            "clip" => Ok(Modality::Clip),
            "sentence" => Ok(Modality::Sentence),
            "pooled" => Ok(Modality::Pooled),
            "combined" => Ok(Modality::Combined),
            "reduced" => Ok(Modality::Reduced),
            other => Err(Error::UnknownModality(other.to_string())),
        }
    }
}

/// One line of the embedding interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub doc_id: String,
    pub modality: Modality,
    pub vector: Vec<f64>,
}

/// Dense row-major matrix with one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    doc_ids: Vec<String>,
    modality: Modality,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Build from per-document rows. Rejects ragged rows, empty input, and
    /// non-finite values.
    pub fn from_rows(doc_ids: Vec<String>, rows: Vec<Vec<f64>>, modality: Modality) -> Result<Self> {
        if doc_ids.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} doc_ids vs {} rows",
                doc_ids.len(),
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput("embedding matrix"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput("zero-dimensional embedding"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has dim {}, expected {}",
                    i,
                    row.len(),
                    dim
                )));
            }
            if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::DimensionMismatch(format!(
                    "row {} contains non-finite value {}",
                    i, bad
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(EmbeddingMatrix { doc_ids, modality, dim, data })
    }

    pub fn n(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    /// Euclidean distance between rows `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .iter()
            .zip(self.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Z-score every column of every modality over the document axis, then
/// concatenate the modalities in the given order into one combined matrix.
///
/// Standard deviation is the population form (divide by N). Zero-variance
/// columns become all-zero columns rather than dividing by zero. All inputs
/// must list the same doc_ids in the same order and at least two documents
/// are required, otherwise the per-column statistics are meaningless.
pub fn zscore_concat(parts: &[&EmbeddingMatrix]) -> Result<EmbeddingMatrix> {
    if parts.is_empty() {
        return Err(Error::EmptyInput("no modalities to fuse"));
    }
    let first = parts[0];
    let n = first.n();
    if n < 2 {
        return Err(Error::TooFewRows { need: 2, got: n });
    }
    for m in &parts[1..] {
        if m.doc_ids() != first.doc_ids() {
            return Err(Error::MismatchedDocIds(describe_id_mismatch(
                first.doc_ids(),
                m.doc_ids(),
            )));
        }
    }

    let total_dim: usize = parts.iter().map(|m| m.dim()).sum();
    let mut data = vec![0.0; n * total_dim];
    let mut col_offset = 0;
    for m in parts {
        for c in 0..m.dim() {
            let mean = (0..n).map(|r| m.row(r)[c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (m.row(r)[c] - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            for r in 0..n {
                let out = &mut data[r * total_dim + col_offset + c];
                *out = if std == 0.0 { 0.0 } else { (m.row(r)[c] - mean) / std };
            }
        }
        col_offset += m.dim();
    }

    Ok(EmbeddingMatrix {
        doc_ids: first.doc_ids().to_vec(),
        modality: Modality::Combined,
        dim: total_dim,
        data,
    })
}

fn describe_id_mismatch(a: &[String], b: &[String]) -> String {
    let sa: BTreeSet<_> = a.iter().collect();
    let sb: BTreeSet<_> = b.iter().collect();
    if sa == sb {
        "same ids, different order".to_string()
    } else {
        let only_a: Vec<_> = sa.difference(&sb).take(3).collect();
        let only_b: Vec<_> = sb.difference(&sa).take(3).collect();
        format!("e.g. only-left {:?}, only-right {:?}", only_a, only_b)
    }
}

/// Read every record of the given modality from a JSONL embedding file,
/// preserving file order.
pub fn read_embeddings(path: &Path, modality: Modality) -> Result<EmbeddingMatrix> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut doc_ids = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Other(format!("{}:{}: {}", path.display(), lineno + 1, e)))?;
        if rec.modality == modality {
            doc_ids.push(rec.doc_id);
            rows.push(rec.vector);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("no rows of requested modality"));
    }
    EmbeddingMatrix::from_rows(doc_ids, rows, modality)
}

/// Write the matrix to `path` as JSONL records.
pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for (i, id) in m.doc_ids().iter().enumerate() {
        let rec = EmbeddingRecord {
            doc_id: id.clone(),
            modality: m.modality(),
            vector: m.row(i).to_vec(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
