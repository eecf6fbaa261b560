//! Aligned multilingual documents: ingestion, tokenization, vocabularies, TF-IDF
//! vectorization and evaluation splits.

mod space;
mod split;
mod vocab;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

pub use space::{vectorize, vectorize_text, FeatureBlock, FeatureSpace, SparseVector};
pub use split::{make_splits, DocIndex, EvaluationSplit, LanguagePair, SplitMode, SplitParams};
pub use vocab::{build_vocabulary, compute_idf, Vocabulary};

use crate::error::{Error, Result};

/// One document: its language, the language-independent concept it describes, and its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub language: String,
    pub concept: String,
    pub text: String,
}

impl RawDocument {
    pub fn new(language: impl Into<String>, concept: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc = Self {
            language: language.into(),
            concept: concept.into(),
            text: text.into(),
        };
        if doc.language.is_empty() || doc.concept.is_empty() {
            return Err(Error::InvalidArgument(
                "document language and concept must be nonempty".into(),
            ));
        }
        Ok(doc)
    }
}

/// Lower-cased maximal runs of Unicode alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Keeps documents whose number of distinct tokens lies in `[min_unique, max_unique]`.
pub fn filter_documents(docs: &[RawDocument], min_unique: usize, max_unique: usize) -> Vec<RawDocument> {
    docs.iter()
        .filter(|d| {
            let unique = tokenize(&d.text).into_iter().collect::<HashSet<_>>().len();
            (min_unique..=max_unique).contains(&unique)
        })
        .cloned()
        .collect()
}

pub fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Parses `language<TAB>concept<TAB>text` records. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::CorpusFormat {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (Some(language), Some(concept), Some(text)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::CorpusFormat {
                line: lineno,
                message: "expected `language<TAB>concept<TAB>text`".into(),
            });
        };
        if language.is_empty() || concept.is_empty() {
            return Err(Error::CorpusFormat {
                line: lineno,
                message: "empty language or concept".into(),
            });
        }
        docs.push(RawDocument {
            language: language.to_string(),
            concept: concept.to_string(),
            text: unescape_text(text),
        });
    }
    Ok(docs)
}

pub fn load_corpus(path: &Path) -> Result<Vec<RawDocument>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(file))
}

pub fn write_corpus<W: Write>(mut writer: W, docs: &[RawDocument]) -> std::io::Result<()> {
    for d in docs {
        writeln!(writer, "{}\t{}\t{}", d.language, d.concept, escape_text(&d.text))?;
    }
    Ok(())
}
