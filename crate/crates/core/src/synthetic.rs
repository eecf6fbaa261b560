//! Seeded generator of aligned multilingual corpora with known word translations.
//!
//! Every concept has a latent vector `z_c`, every word id a latent vector `e_w` shared
//! by all languages. A document about `c` draws tokens from
//! `(1 − ω)·softmax(β·e_wᵀz_c) + ω·zipf(w)`, independently per language, and writes
//! each token with that language's surface form of `w`. Surface vocabularies of
//! different languages are disjoint, so alignment must be learned from the concepts.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{build_vocabulary, vectorize_text, FeatureSpace, RawDocument};
use crate::error::{Error, Result};
use crate::retrieval::{evaluate, CandidatePool, Measure, QuerySet};

/// Which concepts a language has a document for.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageCoverage {
    pub code: String,
    pub concepts: Range<usize>,
}

impl LanguageCoverage {
    pub fn new(code: impl Into<String>, concepts: Range<usize>) -> Self {
        Self {
            code: code.into(),
            concepts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_concepts: usize,
    pub languages: Vec<LanguageCoverage>,
    /// Number of latent word ids; each language has one surface form per id.
    pub n_words: usize,
    pub latent_dim: usize,
    /// Sharpness `β` of the concept-conditioned word distribution.
    pub sharpness: f64,
    /// Weight `ω` of the concept-independent Zipf component.
    pub background_weight: f64,
    /// Tokens per document.
    pub doc_len: Range<usize>,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Two languages covering every concept.
    pub fn bilingual(n_concepts: usize, seed: u64) -> Self {
        Self {
            n_concepts,
            languages: vec![
                LanguageCoverage::new("xa", 0..n_concepts),
                LanguageCoverage::new("xb", 0..n_concepts),
            ],
            n_words: 2000,
            latent_dim: 16,
            sharpness: 4.0,
            background_weight: 0.3,
            doc_len: 150..300,
            seed,
        }
    }

    /// A pivot language covering every concept and two end languages whose coverage
    /// overlaps on `overlap` concepts in the middle.
    pub fn transitive(n_concepts: usize, overlap: usize, seed: u64) -> Self {
        let half = (n_concepts + overlap) / 2;
        Self {
            languages: vec![
                LanguageCoverage::new("xa", 0..half),
                LanguageCoverage::new("xb", n_concepts - half..n_concepts),
                LanguageCoverage::new("xp", 0..n_concepts),
            ],
            ..Self::bilingual(n_concepts, seed)
        }
    }
}

/// Concept identifier used for concept `i`.
pub fn concept_id(i: usize) -> String {
    format!("C{i:05}")
}

pub struct SyntheticCorpus {
    pub docs: Vec<RawDocument>,
    /// Surface form of every latent word id, per language.
    pub lexicons: BTreeMap<String, Vec<String>>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn surface_forms(n: usize, taken: &mut HashSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=4);
        let mut w = String::with_capacity(2 * syllables + 1);
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if rng.gen_bool(0.3) {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.n_words == 0 || cfg.latent_dim == 0 || cfg.doc_len.is_empty() {
        return Err(Error::InvalidArgument(
            "synthetic corpus needs words, a latent dimension and a document length range".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.background_weight) {
        return Err(Error::InvalidArgument("background weight must lie in [0, 1)".into()));
    }
    if let Some(l) = cfg.languages.iter().find(|l| l.concepts.end > cfg.n_concepts) {
        return Err(Error::InvalidArgument(format!(
            "coverage of `{}` exceeds the concept count",
            l.code
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.latent_dim;
    let words = gaussian_rows(&mut rng, cfg.n_words, d, 1.0 / (d as f64).sqrt());
    let concepts = gaussian_rows(&mut rng, cfg.n_concepts, d, 1.0);
    let mut zipf_rank: Vec<usize> = (0..cfg.n_words).collect();
    zipf_rank.shuffle(&mut rng);
    let zipf_total: f64 = (1..=cfg.n_words).map(|r| 1.0 / r as f64).sum();

    let mut taken = HashSet::new();
    let mut lexicons = BTreeMap::new();
    for lang in &cfg.languages {
        if lexicons.contains_key(&lang.code) {
            return Err(Error::InvalidArgument(format!("language `{}` listed twice", lang.code)));
        }
        lexicons.insert(lang.code.clone(), surface_forms(cfg.n_words, &mut taken, &mut rng));
    }

    let mut samplers = Vec::with_capacity(cfg.n_concepts);
    for z in &concepts {
        let logits: Vec<f64> = words
            .iter()
            .map(|e| cfg.sharpness * e.iter().zip(z).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        let weights: Vec<f64> = exp
            .iter()
            .zip(&zipf_rank)
            .map(|(e, &r)| {
                (1.0 - cfg.background_weight) * e / total + cfg.background_weight / ((r + 1) as f64 * zipf_total)
            })
            .collect();
        samplers.push(WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?);
    }

    let mut docs = Vec::new();
    for (li, lang) in cfg.languages.iter().enumerate() {
        let lexicon = &lexicons[&lang.code];
        for c in lang.concepts.clone() {
            // One stream per (language, concept) keeps documents independent of coverage.
            let mut doc_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            doc_rng.set_stream((li as u64) << 32 | c as u64);
            let len = doc_rng.gen_range(cfg.doc_len.clone());
            let tokens: Vec<&str> = (0..len)
                .map(|_| lexicon[samplers[c].sample(&mut doc_rng)].as_str())
                .collect();
            docs.push(RawDocument::new(&lang.code, concept_id(c), tokens.join(" "))?);
        }
    }
    Ok(SyntheticCorpus { docs, lexicons })
}

impl SyntheticCorpus {
    /// Word-by-word translation with the true lexicon; unknown tokens are dropped.
    pub fn translate(&self, text: &str, from: &str, to: &str) -> Result<String> {
        let src = self
            .lexicons
            .get(from)
            .ok_or_else(|| Error::UnknownLanguage(from.to_string()))?;
        let dst = self
            .lexicons
            .get(to)
            .ok_or_else(|| Error::UnknownLanguage(to.to_string()))?;
        let index: HashMap<&str, usize> = src.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        Ok(text
            .split_whitespace()
            .filter_map(|t| index.get(t).map(|&i| dst[i].as_str()))
            .collect::<Vec<_>>()
            .join(" "))
    }

    /// Retrieval with perfect word translations: queries are translated into the target
    /// language and ranked by TF-IDF cosine (IDF from all target-language documents).
    pub fn dictionary_oracle(
        &self,
        query_lang: &str,
        target_lang: &str,
        queries: &[String],
        candidates: &[String],
        ks: &[usize],
    ) -> Result<Vec<f64>> {
        let target_docs: Vec<RawDocument> = self
            .docs
            .iter()
            .filter(|d| d.language == target_lang)
            .cloned()
            .collect();
        let vocab = build_vocabulary(&target_docs, target_lang, usize::MAX, 1)?;
        let space = FeatureSpace::new(vec![vocab])?;
        let find = |lang: &str, concept: &str| {
            self.docs
                .iter()
                .find(|d| d.language == lang && d.concept == concept)
                .ok_or_else(|| Error::Split(format!("no `{lang}` document for `{concept}`")))
        };
        let dense = |text: &str| -> Result<Vec<f64>> { Ok(vectorize_text(target_lang, text, &space)?.to_dense()) };
        let qvecs = queries
            .iter()
            .map(|c| dense(&self.translate(&find(query_lang, c)?.text, query_lang, target_lang)?))
            .collect::<Result<Vec<_>>>()?;
        let cvecs = candidates
            .iter()
            .map(|c| dense(&find(target_lang, c)?.text))
            .collect::<Result<Vec<_>>>()?;
        let pool = CandidatePool::new(target_lang, candidates.to_vec(), cvecs)?;
        let qs = QuerySet {
            language: query_lang.to_string(),
            ids: queries.to_vec(),
            vectors: qvecs,
        };
        evaluate(&qs, &pool, Measure::Cosine, 1, ks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_words: 300,
            doc_len: 40..60,
            ..SyntheticConfig::bilingual(30, 5)
        }
    }

    #[test]
    fn deterministic_and_aligned() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.docs.len(), 60);
        assert!(a.docs.iter().all(|d| (40..60).contains(&tokenize(&d.text).len())));
    }

    #[test]
    fn surface_vocabularies_are_disjoint() {
        let c = generate(&small()).unwrap();
        let xa: HashSet<_> = c.lexicons["xa"].iter().collect();
        assert!(c.lexicons["xb"].iter().all(|w| !xa.contains(w)));
        assert_eq!(xa.len(), 300);
    }

    #[test]
    fn translation_maps_word_ids() {
        let c = generate(&small()).unwrap();
        let text = format!("{} {} zzz", c.lexicons["xa"][3], c.lexicons["xa"][7]);
        assert_eq!(
            c.translate(&text, "xa", "xb").unwrap(),
            format!("{} {}", c.lexicons["xb"][3], c.lexicons["xb"][7])
        );
    }

    #[test]
    fn transitive_coverage_overlaps_in_the_middle() {
        let cfg = SyntheticConfig {
            n_words: 100,
            doc_len: 10..20,
            ..SyntheticConfig::transitive(100, 20, 1)
        };
        assert_eq!(cfg.languages[0].concepts, 0..60);
        assert_eq!(cfg.languages[1].concepts, 40..100);
        let c = generate(&cfg).unwrap();
        assert_eq!(c.docs.len(), 60 + 60 + 100);
    }

    #[test]
    fn documents_do_not_depend_on_coverage() {
        let full = generate(&small()).unwrap();
        let mut cfg = small();
        cfg.languages[1].concepts = 10..30;
        let part = generate(&cfg).unwrap();
        let pick = |c: &SyntheticCorpus, lang: &str, concept: &str| {
            c.docs
                .iter()
                .find(|d| d.language == lang && d.concept == concept)
                .unwrap()
                .text
                .clone()
        };
        assert_eq!(pick(&full, "xb", "C00015"), pick(&part, "xb", "C00015"));
    }
}
