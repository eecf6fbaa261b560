//! End-to-end wiring: training matrices from a split, model fitting per training mode,
//! retrieval evaluation and λ selection.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_vocabulary, filter_documents, vectorize, DocIndex, EvaluationSplit, FeatureSpace, LanguagePair, RawDocument,
    SplitMode,
};
use crate::embed::{Cr5Model, ModelMetadata};
use crate::error::{Error, Result};
use crate::linop::CsrMatrix;
use crate::retrieval::{evaluate, CandidatePool, EvalReport, Measure, QuerySet};
use crate::solver::{cross_validate_lambda, fit, CvOutcome, FitConfig, FitDiagnostics, TrainSet};

/// Vocabulary and document-length limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub max_vocab: usize,
    pub min_doc_freq: u64,
    pub min_unique: usize,
    pub max_unique: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_vocab: 200_000,
            min_doc_freq: 3,
            min_unique: 50,
            max_unique: 1000,
        }
    }
}

/// Keeps documents within the unique-token bounds.
pub fn preprocess(docs: &[RawDocument], pre: &PreprocessConfig) -> Vec<RawDocument> {
    filter_documents(docs, pre.min_unique, pre.max_unique)
}

/// Vectorized training rows for one model.
pub struct TrainingData {
    pub space: FeatureSpace,
    pub train: TrainSet,
    /// Concept of each class index, sorted.
    pub concepts: Vec<String>,
    /// `(language, concept)` of each training row.
    pub rows: Vec<(String, String)>,
}

/// Builds vocabularies (in `languages` order) from `train_docs`, vectorizes, drops rows
/// that vectorize to zero and labels the rest by concept.
pub fn build_training_data(
    train_docs: &[RawDocument],
    languages: &[String],
    pre: &PreprocessConfig,
) -> Result<TrainingData> {
    let vocabs = languages
        .par_iter()
        .map(|l| build_vocabulary(train_docs, l, pre.max_vocab, pre.min_doc_freq))
        .collect::<Result<Vec<_>>>()?;
    let space = FeatureSpace::new(vocabs)?;
    let docs: Vec<&RawDocument> = train_docs.iter().filter(|d| languages.contains(&d.language)).collect();
    let vectors = docs
        .par_iter()
        .map(|d| vectorize(d, &space))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<usize> = (0..docs.len()).filter(|&i| !vectors[i].is_zero()).collect();
    if kept.len() < docs.len() {
        log::warn!(
            "{} training documents vectorize to zero and are dropped",
            docs.len() - kept.len()
        );
    }
    let concepts: Vec<String> = kept
        .iter()
        .map(|&i| docs[i].concept.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels = kept
        .iter()
        .map(|&i| {
            concepts
                .binary_search(&docs[i].concept)
                .expect("concept collected above")
        })
        .collect();
    let rows: Vec<&[(usize, f64)]> = kept.iter().map(|&i| vectors[i].entries()).collect();
    let x = CsrMatrix::from_rows(space.total_dim(), &rows)?;
    let train = TrainSet::new(x, labels, concepts.len())?;
    log::info!(
        "training set: n = {}, p = {}, K = {} ({} languages)",
        train.n(),
        train.p(),
        train.n_classes(),
        languages.len()
    );
    let rows = kept
        .iter()
        .map(|&i| (docs[i].language.clone(), docs[i].concept.clone()))
        .collect();
    Ok(TrainingData {
        space,
        train,
        concepts,
        rows,
    })
}

/// What one model is trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScope {
    /// Set for pairwise models.
    pub pair: Option<LanguagePair>,
    /// Feature-space block order.
    pub languages: Vec<String>,
}

impl ModelScope {
    /// Suffix added to output file names, e.g. `.da-en`.
    pub fn suffix(&self) -> String {
        match &self.pair {
            Some((a, b)) => format!(".{a}-{b}"),
            None => String::new(),
        }
    }

    /// Training documents of this scope.
    pub fn train_docs(&self, docs: &[RawDocument], split: &EvaluationSplit) -> Result<Vec<RawDocument>> {
        match &self.pair {
            Some(pair) => split.pair_train_docs(docs, pair),
            None => Ok(split.train_docs(docs)),
        }
    }

    /// Evaluation pairs whose languages this model covers.
    pub fn eval_pairs<'s>(&self, split: &'s EvaluationSplit) -> Vec<(usize, &'s LanguagePair)> {
        split
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| match &self.pair {
                Some(p) => p.0 == *a && p.1 == *b,
                None => self.languages.contains(a) && self.languages.contains(b),
            })
            .collect()
    }
}

/// Models to train for a split: one per training pair in pairwise mode, one otherwise.
pub fn model_scopes(split: &EvaluationSplit) -> Vec<ModelScope> {
    let mut all = Vec::new();
    for (a, b) in split.training_pairs() {
        for l in [a, b] {
            if !all.contains(l) {
                all.push(l.clone());
            }
        }
    }
    match split.mode {
        SplitMode::Pairwise => split
            .training_pairs()
            .map(|p| ModelScope {
                pair: Some(p.clone()),
                languages: vec![p.0.clone(), p.1.clone()],
            })
            .collect(),
        SplitMode::Joint | SplitMode::Transitive => vec![ModelScope {
            pair: None,
            languages: all,
        }],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub pre: PreprocessConfig,
    pub fit: FitConfig,
    /// Store `H`, `b` and the class index in the model.
    pub keep_classifier: bool,
}

pub struct TrainedModel {
    pub model: Cr5Model,
    pub diagnostics: FitDiagnostics,
    pub rows: Vec<(String, String)>,
}

fn fit_model(data: &TrainingData, mode: SplitMode, cfg: &TrainConfig) -> Result<TrainedModel> {
    let result = fit(&data.train, &data.space.block_ranges(), &cfg.fit)?;
    let metadata = ModelMetadata {
        lambda: cfg.fit.lambda,
        rank: cfg.fit.rank,
        mode,
        seed: cfg.fit.seed,
        tolerances: cfg.fit.tol,
        languages: data.space.languages().map(String::from).collect(),
        eigenvalues: result.eigenvalues.clone(),
    };
    let concepts = cfg.keep_classifier.then(|| data.concepts.clone());
    let model = Cr5Model::from_fit(data.space.clone(), &result, concepts, metadata)?;
    Ok(TrainedModel {
        model,
        diagnostics: result.diagnostics,
        rows: data.rows.clone(),
    })
}

/// Fits one model for `scope`. `docs` should already be preprocessed.
pub fn train_model(
    docs: &[RawDocument],
    split: &EvaluationSplit,
    scope: &ModelScope,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let train_docs = scope.train_docs(docs, split)?;
    let data = build_training_data(&train_docs, &scope.languages, &cfg.pre)?;
    fit_model(&data, split.mode, cfg)
}

/// Which held-out queries to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryRole {
    Test,
    Validation,
}

/// Evaluation settings shared by every direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub measures: Vec<Measure>,
    pub ks: Vec<usize>,
    pub k_nn: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            measures: vec![Measure::Cosine],
            ks: vec![1, 5, 10],
            k_nn: crate::retrieval::DEFAULT_K_NN,
        }
    }
}

fn embed_docs(model: &Cr5Model, index: &DocIndex, language: &str, concepts: &[String]) -> Result<Vec<Vec<f64>>> {
    concepts
        .par_iter()
        .map(|c| {
            let doc = index.require(language, c)?;
            model.embed_text(language, &doc.text)
        })
        .collect()
}

/// Evaluates both directions of every pair in `pairs`.
pub fn evaluate_pairs(
    model: &Cr5Model,
    docs: &[RawDocument],
    split: &EvaluationSplit,
    pairs: &[(usize, &LanguagePair)],
    role: QueryRole,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let index = DocIndex::new(docs)?;
    let mut report = EvalReport::default();
    for &(i, (a, b)) in pairs {
        for lang in [a, b] {
            if model.space().block(lang).is_none() {
                return Err(Error::UnknownLanguage(format!("{lang} (not covered by the model)")));
            }
        }
        let queries = match role {
            QueryRole::Test => &split.test_queries[i],
            QueryRole::Validation => &split.valid_queries[i],
        };
        for (q, t) in [(a, b), (b, a)] {
            let cand_ids = split
                .candidates
                .get(t)
                .ok_or_else(|| Error::Split(format!("no candidates for `{t}`")))?;
            let pool = CandidatePool::new(t.as_str(), cand_ids.clone(), embed_docs(model, &index, t, cand_ids)?)?;
            let qs = QuerySet {
                language: q.clone(),
                ids: queries.clone(),
                vectors: embed_docs(model, &index, q, queries)?,
            };
            for &measure in &cfg.measures {
                let p = evaluate(&qs, &pool, measure, cfg.k_nn, &cfg.ks)?;
                log::info!("{q}→{t} {measure}: P@{:?} = {:?}", cfg.ks, p);
                report.push(q, t, measure, &cfg.ks, &p, qs.ids.len(), pool.len());
            }
        }
    }
    Ok(report)
}

/// Mean cosine validation P@1 over both directions of every covered pair.
pub fn validation_p1(
    model: &Cr5Model,
    docs: &[RawDocument],
    split: &EvaluationSplit,
    scope: &ModelScope,
) -> Result<f64> {
    let cfg = EvalConfig {
        measures: vec![Measure::Cosine],
        ks: vec![1],
        k_nn: 1,
    };
    let report = evaluate_pairs(
        model,
        docs,
        split,
        &scope.eval_pairs(split),
        QueryRole::Validation,
        &cfg,
    )?;
    if report.rows.is_empty() {
        return Err(Error::Split("no validation pairs for this model".into()));
    }
    Ok(report.rows.iter().map(|r| r.precision).sum::<f64>() / report.rows.len() as f64)
}

/// Fits once per λ on the same training data and picks the best validation P@1.
pub fn cross_validate(
    docs: &[RawDocument],
    split: &EvaluationSplit,
    scope: &ModelScope,
    grid: &[f64],
    cfg: &TrainConfig,
) -> Result<CvOutcome> {
    let train_docs = scope.train_docs(docs, split)?;
    let data = build_training_data(&train_docs, &scope.languages, &cfg.pre)?;
    cross_validate_lambda(grid, |lambda| {
        let cfg = TrainConfig {
            fit: FitConfig { lambda, ..cfg.fit },
            keep_classifier: false,
            ..cfg.clone()
        };
        let trained = fit_model(&data, split.mode, &cfg)?;
        validation_p1(&trained.model, docs, split, scope)
    })
}
