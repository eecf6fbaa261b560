//! Trained models: embedding texts and words through `Φ`, and model persistence.

mod format;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{vectorize_text, FeatureSpace, SparseVector, SplitMode};
use crate::error::{Error, Result};
use crate::linop::SolverTolerances;
use crate::solver::FitResult;

pub use format::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};

/// Training configuration recorded alongside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub lambda: f64,
    pub rank: usize,
    pub mode: SplitMode,
    pub seed: u64,
    pub tolerances: SolverTolerances,
    /// Languages of the pair(s) the model was trained on, in block order.
    pub languages: Vec<String>,
    /// Top eigenvalues of the classifier Gram operator.
    pub eigenvalues: Vec<f64>,
}

/// Optional classification head: `scores = H·diag(sigma)·Φx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// K×r.
    pub h: DMatrix<f64>,
    pub b: Vec<f64>,
    /// Concept of each class index.
    pub concepts: Vec<String>,
}

/// A trained embedding model.
///
/// Each language block of `Φ` is kept word-major, so a word vector is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Cr5Model {
    space: FeatureSpace,
    rank: usize,
    /// Per block, `p_l · r` values; column `j` at `[j·r, (j+1)·r)`.
    columns: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    classifier: Option<Classifier>,
    metadata: ModelMetadata,
}

impl Cr5Model {
    /// Assembles a model from raw parts. `columns[l]` holds block `l` word-major.
    pub fn from_parts(
        space: FeatureSpace,
        rank: usize,
        columns: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        classifier: Option<Classifier>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if columns.len() != space.blocks().len() {
            return Err(Error::DimensionMismatch {
                expected: space.blocks().len(),
                got: columns.len(),
            });
        }
        for (block, cols) in space.blocks().iter().zip(&columns) {
            if cols.len() != block.vocabulary.len() * rank {
                return Err(Error::DimensionMismatch {
                    expected: block.vocabulary.len() * rank,
                    got: cols.len(),
                });
            }
        }
        if sigma.len() != rank {
            return Err(Error::DimensionMismatch {
                expected: rank,
                got: sigma.len(),
            });
        }
        if let Some(c) = &classifier {
            let k = c.concepts.len();
            if c.h.nrows() != k || c.h.ncols() != rank || c.b.len() != k {
                return Err(Error::InvalidArgument(format!(
                    "classifier shapes inconsistent: H {}×{}, b {}, {} concepts, rank {rank}",
                    c.h.nrows(),
                    c.h.ncols(),
                    c.b.len(),
                    k
                )));
            }
        }
        Ok(Self {
            space,
            rank,
            columns,
            sigma,
            classifier,
            metadata,
        })
    }

    /// Splits a fitted `Φ` into per-language blocks of `space`.
    pub fn from_fit(
        space: FeatureSpace,
        fit: &FitResult,
        concepts: Option<Vec<String>>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        let r = fit.rank();
        if fit.phi.ncols() != space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.total_dim(),
                got: fit.phi.ncols(),
            });
        }
        let columns = space
            .blocks()
            .iter()
            .map(|block| {
                let mut cols = Vec::with_capacity(block.vocabulary.len() * r);
                for c in block.range() {
                    cols.extend(fit.phi.column(c).iter());
                }
                cols
            })
            .collect();
        let classifier = concepts.map(|concepts| Classifier {
            h: fit.h.clone(),
            b: fit.b.clone(),
            concepts,
        });
        Self::from_parts(space, r, columns, fit.sigma.clone(), classifier, metadata)
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn classifier(&self) -> Option<&Classifier> {
        self.classifier.as_ref()
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    #[cfg(test)]
    pub(crate) fn block_columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.space.languages()
    }

    /// `Φ·x` for a vector in the model's feature space.
    pub fn embed_vector(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.space.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.total_dim(),
                got: x.dim(),
            });
        }
        let r = self.rank;
        let blocks = self.space.blocks();
        let mut out = vec![0.0; r];
        let mut l = 0;
        for &(c, v) in x.entries() {
            while c >= blocks[l].range().end {
                l += 1;
            }
            let j = c - blocks[l].offset;
            let col = &self.columns[l][j * r..(j + 1) * r];
            for (o, p) in out.iter_mut().zip(col) {
                *o += v * p;
            }
        }
        Ok(out)
    }

    /// Tokenizes, vectorizes with the model's vocabulary and IDF, and projects.
    pub fn embed_text(&self, language: &str, text: &str) -> Result<Vec<f64>> {
        self.embed_vector(&vectorize_text(language, text, &self.space)?)
    }

    /// Raw column of `Φ` for `word` (not normalized).
    pub fn phi_col(&self, language: &str, word: &str) -> Result<&[f64]> {
        let l = self
            .space
            .blocks()
            .iter()
            .position(|b| b.language() == language)
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))?;
        let j = self.space.blocks()[l]
            .vocabulary
            .index_of(word)
            .ok_or_else(|| Error::WordNotFound {
                language: language.to_string(),
                word: word.to_string(),
            })?;
        Ok(&self.columns[l][j * self.rank..(j + 1) * self.rank])
    }

    /// Class scores `H·diag(sigma)·Φx + b`, if the model carries a classifier.
    pub fn class_scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let c = self
            .classifier
            .as_ref()
            .ok_or_else(|| Error::InvalidState("model was saved without a classification head".into()))?;
        let z: Vec<f64> = self
            .embed_vector(x)?
            .iter()
            .zip(&self.sigma)
            .map(|(e, s)| e * s)
            .collect();
        Ok((0..c.h.nrows())
            .map(|k| c.h.row(k).iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + c.b[k])
            .collect())
    }

    /// Drops the classification head.
    pub fn without_classifier(mut self) -> Self {
        self.classifier = None;
        self
    }

    /// `max |ΦΦᵀ − I|` over all blocks together.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rank;
        let mut gram = DMatrix::<f64>::zeros(r, r);
        for cols in &self.columns {
            for col in cols.chunks_exact(r) {
                for i in 0..r {
                    let ci = col[i];
                    if ci == 0.0 {
                        continue;
                    }
                    for j in 0..r {
                        gram[(i, j)] += ci * col[j];
                    }
                }
            }
        }
        (gram - DMatrix::identity(r, r)).amax()
    }
}

/// Writes `id<TAB>v1<TAB>…<TAB>vr` lines with 17 significant digits.
pub fn write_embedding_row<W: Write>(mut w: W, id: &str, v: &[f64]) -> std::io::Result<()> {
    w.write_all(id.as_bytes())?;
    for x in v {
        write!(w, "\t{x:.16e}")?;
    }
    writeln!(w)
}

/// Parses the embedding TSV written by [`write_embedding_row`].
pub fn read_embeddings<R: std::io::BufRead>(reader: R) -> Result<Vec<(String, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::CorpusFormat {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let v = fields
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::CorpusFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
        rows.push((id, v));
    }
    Ok(rows)
}
