use std::collections::BTreeMap;
use std::ops::Range;

use super::{tokenize, RawDocument, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub vocabulary: Vocabulary,
    pub offset: usize,
}

impl FeatureBlock {
    pub fn language(&self) -> &str {
        self.vocabulary.language()
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.vocabulary.len()
    }
}

/// Per-language vocabularies stacked into one product space of dimension `Σ p_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpace {
    blocks: Vec<FeatureBlock>,
    total_dim: usize,
}

impl FeatureSpace {
    /// Stacks the vocabularies in the given order; languages must be distinct.
    pub fn new(vocabularies: Vec<Vocabulary>) -> Result<Self> {
        let mut blocks = Vec::with_capacity(vocabularies.len());
        let mut offset = 0;
        for vocabulary in vocabularies {
            if blocks
                .iter()
                .any(|b: &FeatureBlock| b.language() == vocabulary.language())
            {
                return Err(Error::InvalidArgument(format!(
                    "language `{}` appears twice in the feature space",
                    vocabulary.language()
                )));
            }
            let len = vocabulary.len();
            blocks.push(FeatureBlock { vocabulary, offset });
            offset += len;
        }
        Ok(Self {
            blocks,
            total_dim: offset,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn block(&self, language: &str) -> Option<&FeatureBlock> {
        self.blocks.iter().find(|b| b.language() == language)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.language())
    }

    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        self.blocks.iter().map(FeatureBlock::range).collect()
    }
}

/// Sparse vector with strictly increasing indices and finite nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
    dim: usize,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidArgument(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        if entries.last().is_some_and(|e| e.0 >= dim) {
            return Err(Error::InvalidArgument("sparse index out of range".into()));
        }
        if entries.iter().any(|e| !e.1.is_finite() || e.1 == 0.0) {
            return Err(Error::InvalidArgument(
                "sparse values must be finite and nonzero".into(),
            ));
        }
        Ok(Self { entries, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// L2-normalized TF-IDF vector of `doc` in `space`.
pub fn vectorize(doc: &RawDocument, space: &FeatureSpace) -> Result<SparseVector> {
    vectorize_text(&doc.language, &doc.text, space)
}

/// Raw in-document counts times IDF, placed in the language's block and scaled to unit
/// norm. Out-of-vocabulary words are dropped; an all-zero result stays zero.
pub fn vectorize_text(language: &str, text: &str, space: &FeatureSpace) -> Result<SparseVector> {
    let block = space
        .block(language)
        .ok_or_else(|| Error::UnknownLanguage(language.to_string()))?;
    let vocab = &block.vocabulary;
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for token in tokenize(text) {
        if let Some(i) = vocab.index_of(&token) {
            *counts.entry(i).or_default() += 1;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, tf)| (block.offset + i, tf as f64 * vocab.idf()[i]))
        .filter(|e| e.1 != 0.0)
        .collect();
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in &mut entries {
            e.1 /= norm;
        }
    }
    Ok(SparseVector {
        entries,
        dim: space.total_dim(),
    })
}
