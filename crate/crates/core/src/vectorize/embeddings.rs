use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::VectorizeError;

/// Precomputed embeddings keyed by document id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    /// Reads `{"id": ..., "vector": [...]}` lines. The first row fixes the
    /// dimension.
    pub fn load(path: &Path) -> Result<Self, VectorizeError> {
        let content = fs::read_to_string(path).map_err(|source| VectorizeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&content)
    }

    pub fn parse(content: &str) -> Result<Self, VectorizeError> {
        let mut table = EmbeddingTable::default();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row =
                serde_json::from_str(line).map_err(|e| VectorizeError::MalformedLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            table.insert(row.id, row.vector)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, id: String, vector: Vec<f64>) -> Result<(), VectorizeError> {
        if self.ids.is_empty() {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(VectorizeError::DimMismatch(id));
        }
        if self.vectors.contains_key(&id) {
            return Err(VectorizeError::DuplicateId(id));
        }
        self.ids.push(id.clone());
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in file order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Result<&[f64], VectorizeError> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| VectorizeError::MissingEmbedding(id.to_string()))
    }
}
