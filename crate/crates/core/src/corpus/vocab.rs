use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use super::{tokenize, RawDocument};
use crate::error::{Error, Result};

/// Per-language word list with document frequencies and IDF weights.
///
/// `words`, `doc_freq` and `idf` are parallel; a word's position is its column within
/// the language block.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    language: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<u64>,
    idf: Vec<f64>,
}

impl Vocabulary {
    pub fn empty(language: impl Into<String>) -> Self {
        Self {
            language: language.into(),
            words: Vec::new(),
            index: HashMap::new(),
            doc_freq: Vec::new(),
            idf: Vec::new(),
        }
    }

    /// Assembles a vocabulary from parallel lists. IDF may be filled later.
    pub fn from_parts(
        language: impl Into<String>,
        words: Vec<String>,
        doc_freq: Vec<u64>,
        idf: Vec<f64>,
    ) -> Result<Self> {
        if words.len() != doc_freq.len() || words.len() != idf.len() {
            return Err(Error::InvalidArgument("vocabulary columns differ in length".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word `{w}`")));
            }
        }
        if idf.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("idf must be finite and nonnegative".into()));
        }
        Ok(Self {
            language: language.into(),
            words,
            index,
            doc_freq,
            idf,
        })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn doc_freq(&self) -> &[u64] {
        &self.doc_freq
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Header `lang<TAB>size`, then `word<TAB>doc_freq<TAB>idf` in index order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}\t{}", self.language, self.words.len())?;
        for i in 0..self.words.len() {
            writeln!(w, "{}\t{}\t{}", self.words[i], self.doc_freq[i], self.idf[i])?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::CorpusFormat {
            line,
            message: message.to_string(),
        };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing vocabulary header"))?
            .map_err(|e| bad(1, &e.to_string()))?;
        let (language, size) = header
            .split_once('\t')
            .ok_or_else(|| bad(1, "header must be `lang<TAB>size`"))?;
        let size: usize = size.parse().map_err(|_| bad(1, "invalid vocabulary size"))?;
        let mut words = Vec::with_capacity(size);
        let mut doc_freq = Vec::with_capacity(size);
        let mut idf = Vec::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| bad(lineno, &e.to_string()))?;
            let mut f = line.split('\t');
            let (Some(word), Some(df), Some(w), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad(lineno, "expected `word<TAB>doc_freq<TAB>idf`"));
            };
            words.push(word.to_string());
            doc_freq.push(df.parse().map_err(|_| bad(lineno, "invalid doc_freq"))?);
            idf.push(w.parse().map_err(|_| bad(lineno, "invalid idf"))?);
        }
        if words.len() != size {
            return Err(bad(1, &format!("header declares {size} words, found {}", words.len())));
        }
        Self::from_parts(language, words, doc_freq, idf)
    }
}

/// Builds the vocabulary of `language` from its training documents.
///
/// Words in fewer than `min_doc_freq` documents are discarded; the rest are ranked by
/// total corpus frequency (ties lexicographic) and the top `max_size` kept. Documents in
/// other languages are ignored.
pub fn build_vocabulary(
    train_docs: &[RawDocument],
    language: &str,
    max_size: usize,
    min_doc_freq: u64,
) -> Result<Vocabulary> {
    let mut df: HashMap<String, u64> = HashMap::new();
    let mut total: HashMap<String, u64> = HashMap::new();
    let mut n_docs = 0usize;
    for doc in train_docs.iter().filter(|d| d.language == language) {
        n_docs += 1;
        let tokens = tokenize(&doc.text);
        let mut seen = HashSet::new();
        for t in tokens {
            *total.entry(t.clone()).or_default() += 1;
            if seen.insert(t.clone()) {
                *df.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64, u64)> = df
        .into_iter()
        .filter(|(_, d)| *d >= min_doc_freq)
        .map(|(w, d)| {
            let t = total[&w];
            (w, d, t)
        })
        .collect();
    ranked.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);

    let words: Vec<String> = ranked.iter().map(|(w, _, _)| w.clone()).collect();
    let doc_freq: Vec<u64> = ranked.iter().map(|(_, d, _)| *d).collect();
    let idf = vec![0.0; words.len()];
    let vocab = Vocabulary::from_parts(language, words, doc_freq, idf)?;
    if vocab.is_empty() {
        return Ok(vocab);
    }
    compute_idf(vocab, n_docs)
}

/// Fills `idf(w) = ln(n_train_docs / doc_freq(w))`.
pub fn compute_idf(mut vocab: Vocabulary, n_train_docs: usize) -> Result<Vocabulary> {
    if n_train_docs == 0 && !vocab.is_empty() {
        return Err(Error::InvalidState(
            "idf requires at least one training document".into(),
        ));
    }
    for (i, &df) in vocab.doc_freq.iter().enumerate() {
        if df == 0 {
            return Err(Error::InvalidState(format!(
                "word `{}` has zero document frequency",
                vocab.words[i]
            )));
        }
        if df as usize > n_train_docs {
            return Err(Error::InvalidState(format!(
                "word `{}` has document frequency {df} above the document count {n_train_docs}",
                vocab.words[i]
            )));
        }
        vocab.idf[i] = (n_train_docs as f64 / df as f64).ln();
    }
    Ok(vocab)
}
