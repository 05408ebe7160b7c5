//! Embedding vectors and row-major embedding sets.

use crate::error::{Error, Result};

/// A single `d`-dimensional embedding tagged with the backbone that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
    model_id: String,
}

impl Embedding {
    pub fn new(values: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("embedding has zero length".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            model_id: model_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// `count × d` embeddings from one model, stored row-major, with optional
/// per-row identity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    data: Vec<f64>,
    model_id: String,
    source_labels: Option<Vec<String>>,
}

impl EmbeddingSet {
    /// Builds a set from flat row-major data.
    pub fn from_flat(dim: usize, data: Vec<f64>, model_id: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidEmbedding("dimension must be at least 1".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidEmbedding(format!(
                "{} values do not form a nonempty set of rows of width {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding(format!(
                "non-finite value {} at row {}, column {}",
                data[i],
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            dim,
            data,
            model_id: model_id.into(),
            source_labels: None,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], model_id: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_flat(dim, data, model_id)
    }

    /// Attaches one label per row.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.count() {
            return Err(Error::Format(format!(
                "{} labels for {} rows",
                labels.len(),
                self.count()
            )));
        }
        self.source_labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn source_labels(&self) -> Option<&[String]> {
        self.source_labels.as_deref()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Row `i` as an owned [`Embedding`].
    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding {
            values: self.row(i).to_vec(),
            model_id: self.model_id.clone(),
        }
    }

    /// Subset of rows by index, carrying labels along.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidEmbedding("empty selection".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let source_labels = self
            .source_labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        Ok(Self {
            dim: self.dim,
            data,
            model_id: self.model_id.clone(),
            source_labels,
        })
    }

    /// Rows grouped by label, in lexicographic label order. `None` when the
    /// set carries no labels.
    pub fn split_by_label(&self) -> Option<Vec<(String, EmbeddingSet)>> {
        let labels = self.source_labels.as_ref()?;
        let mut groups: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(l.as_str()).or_default().push(i);
        }
        Some(
            groups
                .into_iter()
                .map(|(l, idx)| (l.to_string(), self.select(&idx).expect("nonempty group")))
                .collect(),
        )
    }
}
