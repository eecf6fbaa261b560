use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use cr5::corpus::{load_corpus, make_splits, unescape_text, vectorize_text, EvaluationSplit, RawDocument, SplitParams};
use cr5::embed::{load_model, save_model, write_embedding_row};
use cr5::pipeline::{
    cross_validate, evaluate_pairs, model_scopes, preprocess, train_model, ModelScope, QueryRole, TrainConfig,
};
use cr5::retrieval::EvalReport;
use cr5::Error;

use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Rows per parallel embedding batch.
const EMBED_BATCH: usize = 4096;

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing required setting `{key}`")))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Opens `path` for writing, or stdout when `path` is unset or `-`.
fn open_output(path: Option<&Path>) -> Result<(Box<dyn Write>, PathBuf)> {
    match path.filter(|p| p.as_os_str() != "-") {
        Some(p) => Ok((Box::new(create(p)?), p.to_path_buf())),
        None => Ok((Box::new(BufWriter::new(io::stdout().lock())), PathBuf::from("<stdout>"))),
    }
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let (mut w, name) = open_output(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(&name))
}

/// Loads the corpus, keeps the configured languages and applies the length filter.
fn load_docs(cfg: &RunConfig) -> Result<Vec<RawDocument>> {
    let path = require(&cfg.corpus, "corpus")?;
    let mut docs = load_corpus(path)?;
    if !cfg.languages.is_empty() {
        docs.retain(|d| cfg.languages.contains(&d.language));
    }
    let kept = preprocess(&docs, &cfg.pre);
    log::info!(
        "{} documents loaded, {} within the length limits",
        docs.len(),
        kept.len()
    );
    Ok(kept)
}

fn load_split(cfg: &RunConfig) -> Result<EvaluationSplit> {
    let path = require(&cfg.split, "split")?;
    let file = File::open(path).map_err(io_err(path))?;
    Ok(EvaluationSplit::read(BufReader::new(file))?)
}

/// `model.bin` with suffix `.a-b` becomes `model.bin.a-b`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    if cfg.pairs.is_empty() {
        return Err(CliError::Usage("missing required setting `pairs`".into()));
    }
    let docs = load_docs(cfg)?;
    let params = SplitParams {
        pairs: cfg.pairs.clone(),
        n_queries: cfg.n_queries,
        n_valid: cfg.n_valid,
        n_candidates: cfg.n_candidates,
        mode: cfg.mode,
        seed: cfg.seed,
    };
    let split = make_splits(&docs, &params)?;
    let out = require(&cfg.split, "split")?;
    let mut w = create(out)?;
    split.write(&mut w).and_then(|_| w.flush()).map_err(io_err(out))?;

    let mut concepts: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in &docs {
        concepts.entry(&d.language).or_default().insert(&d.concept);
    }
    let train: BTreeMap<_, usize> = split.train.iter().map(|(p, c)| (p, c.len())).collect();
    with_output(None, |w| {
        writeln!(w, "query_lang\ttarget_lang\tintersection\ttest\tvalid\ttrain")?;
        for (i, pair @ (a, b)) in split.pairs.iter().enumerate() {
            let shared = match (concepts.get(a.as_str()), concepts.get(b.as_str())) {
                (Some(x), Some(y)) => x.intersection(y).count(),
                _ => 0,
            };
            let n_train = train.get(pair).map_or("-".to_string(), usize::to_string);
            writeln!(
                w,
                "{a}\t{b}\t{shared}\t{}\t{}\t{n_train}",
                split.test_queries[i].len(),
                split.valid_queries[i].len()
            )?;
        }
        Ok(())
    })
}

fn train_config(cfg: &RunConfig, lambda: f64) -> TrainConfig {
    TrainConfig {
        pre: cfg.pre,
        fit: cfg.fit(lambda),
        keep_classifier: cfg.keep_classifier,
    }
}

fn check_mode(cfg: &RunConfig, split: &EvaluationSplit) -> Result<()> {
    if cfg.mode != split.mode {
        return Err(CliError::Core(Error::InvalidArgument(format!(
            "mode is `{}` but the split was made in `{}` mode",
            cfg.mode, split.mode
        ))));
    }
    Ok(())
}

fn scope_name(scope: &ModelScope) -> String {
    match &scope.pair {
        Some((a, b)) => format!("{a}-{b}"),
        None => scope.languages.join("+"),
    }
}

/// Fits every model of the split and writes it with a manifest of its training rows.
pub fn train(cfg: &RunConfig, values: &BTreeMap<String, String>) -> Result<()> {
    let split = load_split(cfg)?;
    check_mode(cfg, &split)?;
    let docs = load_docs(cfg)?;
    let base = require(&cfg.model, "model")?;
    for scope in model_scopes(&split) {
        let name = scope_name(&scope);
        let lambda = match &cfg.lambda_grid {
            Some(grid) => {
                let outcome = cross_validate(&docs, &split, &scope, grid, &train_config(cfg, cfg.lambda))?;
                log::info!("{name}: cross-validated lambda {:e}", outcome.best_lambda);
                outcome.best_lambda
            }
            None => cfg.lambda,
        };
        let trained = train_model(&docs, &split, &scope, &train_config(cfg, lambda))?;
        let d = &trained.diagnostics;
        log::info!(
            "{name}: {} training rows, lambda {lambda:e}, rank {}, {} Lanczos steps{}, {} CG solves \
             ({} iterations, {} truncated)",
            trained.rows.len(),
            trained.model.rank(),
            d.lanczos_steps,
            if d.eig_truncated { " (truncated)" } else { "" },
            d.cg_solves,
            d.cg_iterations,
            d.cg_truncated
        );
        log::info!("{name}: eigenvalues {:?}", trained.model.metadata().eigenvalues);
        log::info!("{name}: Ritz residuals {:?}", d.ritz_residuals);
        if d.eig_truncated || d.cg_truncated > 0 {
            log::warn!("{name}: solver hit its iteration cap; consider larger cg_max_iter or eig_max_iter");
        }

        let path = with_suffix(base, &scope.suffix());
        save_model(&trained.model, &path)?;
        let manifest = with_suffix(&path, ".manifest");
        let mut w = create(&manifest)?;
        let write = |w: &mut BufWriter<File>| -> io::Result<()> {
            for line in RunConfig::to_text(values).lines() {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "# model_lambda = {lambda}")?;
            writeln!(
                w,
                "# diagnostics = {}",
                serde_json::to_string(d).map_err(io::Error::other)?
            )?;
            writeln!(w, "language\tconcept")?;
            for (l, c) in &trained.rows {
                writeln!(w, "{l}\t{c}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(io_err(&manifest))?;
        log::info!("{name}: wrote {}", path.display());
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    let docs = load_docs(cfg)?;
    let base = require(&cfg.model, "model")?;
    let mut report = EvalReport::default();
    for scope in model_scopes(&split) {
        let path = with_suffix(base, &scope.suffix());
        let model = load_model(&path)?;
        if model.metadata().mode != split.mode {
            return Err(CliError::Core(Error::InvalidArgument(format!(
                "{} was trained in `{}` mode but the split is `{}`",
                path.display(),
                model.metadata().mode,
                split.mode
            ))));
        }
        let pairs = scope.eval_pairs(&split);
        let part = evaluate_pairs(&model, &docs, &split, &pairs, QueryRole::Test, &cfg.eval())?;
        report.rows.extend(part.rows);
    }
    with_output(cfg.report.as_deref(), |w| report.write_tsv(w))
}

pub fn cv(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    check_mode(cfg, &split)?;
    let docs = load_docs(cfg)?;
    let grid = cfg
        .lambda_grid
        .clone()
        .unwrap_or_else(|| cr5::solver::DEFAULT_LAMBDA_GRID.to_vec());
    let mut rows = Vec::new();
    for scope in model_scopes(&split) {
        let outcome = cross_validate(&docs, &split, &scope, &grid, &train_config(cfg, cfg.lambda))?;
        for (lambda, p1) in outcome.scores {
            rows.push((scope_name(&scope), lambda, p1, lambda == outcome.best_lambda));
        }
    }
    with_output(cfg.report.as_deref(), |w| {
        writeln!(w, "model\tlambda\tvalidation_p1\tbest")?;
        for (name, lambda, p1, best) in &rows {
            writeln!(w, "{name}\t{lambda}\t{p1}\t{best}")?;
        }
        Ok(())
    })
}

struct EmbedInput {
    line: usize,
    language: String,
    id: String,
    text: String,
}

/// Streams `language<TAB>id<TAB>text` rows into `id<TAB>v1..vr` rows.
pub fn embed(cfg: &RunConfig) -> Result<()> {
    let model = load_model(require(&cfg.model, "model")?)?;
    let input = require(&cfg.input, "input")?;
    let reader: Box<dyn BufRead> = if input.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        Box::new(BufReader::new(File::open(input).map_err(io_err(input))?))
    };

    let (mut w, out_name) = open_output(cfg.output.as_deref())?;

    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    let mut oov_only = 0usize;
    let mut written = 0usize;
    let mut batch: Vec<EmbedInput> = Vec::with_capacity(EMBED_BATCH);
    let mut lines = reader.lines().enumerate();
    loop {
        batch.clear();
        for (i, line) in lines.by_ref() {
            let line = line.map_err(io_err(input))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let mut f = line.splitn(3, '\t');
            let (Some(language), Some(id), Some(text)) = (f.next(), f.next(), f.next()) else {
                return Err(CliError::Core(Error::CorpusFormat {
                    line: i + 1,
                    message: "expected `language<TAB>id<TAB>text`".into(),
                }));
            };
            batch.push(EmbedInput {
                line: i + 1,
                language: language.to_string(),
                id: id.to_string(),
                text: unescape_text(text),
            });
            if batch.len() == EMBED_BATCH {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        let embedded: Vec<Option<(bool, Vec<f64>)>> = batch
            .par_iter()
            .map(|row| match vectorize_text(&row.language, &row.text, model.space()) {
                Ok(x) => model.embed_vector(&x).map(|v| Some((x.is_zero(), v))),
                Err(Error::UnknownLanguage(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<cr5::Result<_>>()?;
        for (row, out) in batch.iter().zip(embedded) {
            match out {
                Some((zero, v)) => {
                    if zero {
                        log::debug!("line {}: no in-vocabulary words", row.line);
                        oov_only += 1;
                    }
                    write_embedding_row(&mut w, &row.id, &v).map_err(io_err(&out_name))?;
                    written += 1;
                }
                None => {
                    log::warn!("line {}: skipped, unknown language `{}`", row.line, row.language);
                    *unknown.entry(row.language.clone()).or_default() += 1;
                }
            }
        }
    }
    w.flush().map_err(io_err(&out_name))?;

    let skipped: usize = unknown.values().sum();
    log::info!("embedded {written} rows");
    if oov_only > 0 {
        log::warn!("{oov_only} rows had no in-vocabulary words and were embedded as zero vectors");
    }
    if skipped > 0 {
        let langs: Vec<String> = unknown.iter().map(|(l, n)| format!("{l} ({n})")).collect();
        log::warn!("{skipped} rows skipped for unknown languages: {}", langs.join(", "));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_is_appended_to_the_file_name() {
        assert_eq!(
            with_suffix(Path::new("out/m.cr5"), ".da-vi"),
            PathBuf::from("out/m.cr5.da-vi")
        );
        assert_eq!(with_suffix(Path::new("m"), ""), PathBuf::from("m"));
    }
}
