//! Flat `key = value` run configuration. Every key is also a command-line flag.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use cr5::corpus::{LanguagePair, SplitMode};
use cr5::linop::SolverTolerances;
use cr5::pipeline::{EvalConfig, PreprocessConfig};
use cr5::retrieval::Measure;
use cr5::solver::{FitConfig, DEFAULT_LAMBDA_GRID};

/// Recognized keys with their defaults and help text. An empty default means unset.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("corpus", "", "corpus TSV (language, concept, text)"),
    (
        "languages",
        "",
        "comma-separated languages to load; defaults to the pair members",
    ),
    ("pairs", "", "comma-separated language pairs, each written `a:b`"),
    ("mode", "joint", "training mode: joint, pairwise or transitive"),
    ("n_queries", "1000", "test queries per pair"),
    ("n_valid", "1000", "validation queries per pair"),
    ("n_candidates", "200000", "retrieval candidates per language"),
    ("max_vocab", "200000", "vocabulary size cap per language"),
    ("min_doc_freq", "3", "minimum training document frequency of a word"),
    ("min_unique", "50", "minimum distinct words per document"),
    ("max_unique", "1000", "maximum distinct words per document"),
    ("lambda", "1", "ridge regularization"),
    (
        "lambda_grid",
        "",
        "comma-separated λ values; when set, train cross-validates over them",
    ),
    ("rank", "300", "embedding dimension r"),
    ("cg_eps", "0.01", "conjugate gradient relative residual tolerance"),
    ("cg_max_iter", "500", "conjugate gradient iteration cap"),
    ("eig_eps", "0.1", "eigensolver relative residual tolerance"),
    ("eig_max_iter", "250", "eigensolver step cap"),
    ("seed", "0", "random seed for splitting and the eigensolver start"),
    (
        "threads",
        "0",
        "worker threads; 0 uses all cores, 1 is bit-reproducible",
    ),
    ("measure", "cosine", "comma-separated similarity measures: cosine, csls"),
    ("k", "1,5,10", "comma-separated cutoffs for precision at k"),
    ("k_nn", "10", "CSLS neighborhood size"),
    (
        "keep_classifier",
        "false",
        "store the class scores (H, b, concept ids) in the model",
    ),
    ("split", "", "split file"),
    ("model", "", "model file; pairwise models get a `.a-b` suffix"),
    ("report", "", "evaluation or cross-validation report; stdout when unset"),
    ("input", "", "embedding input TSV (language, id, text); `-` for stdin"),
    ("output", "", "embedding output TSV; `-` or unset for stdout"),
];

/// Config errors are reported as `E_CONFIG`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

/// Parses a config file body. `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {lineno}: expected `key = value`")))?;
        let key = normalize_key(key);
        if !is_known(&key) {
            return Err(ConfigError(format!("line {lineno}: unknown key `{key}`")));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError(format!("line {lineno}: duplicate key `{key}`")));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub languages: Vec<String>,
    pub pairs: Vec<LanguagePair>,
    pub mode: SplitMode,
    pub n_queries: usize,
    pub n_valid: usize,
    pub n_candidates: usize,
    pub pre: PreprocessConfig,
    pub lambda: f64,
    pub lambda_grid: Option<Vec<f64>>,
    pub rank: usize,
    pub tol: SolverTolerances,
    pub seed: u64,
    pub threads: usize,
    pub measures: Vec<Measure>,
    pub ks: Vec<usize>,
    pub k_nn: usize,
    pub keep_classifier: bool,
    pub split: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| ConfigError(format!("{key}: invalid value `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_pair(s: &str) -> Result<LanguagePair> {
    match s.split_once(':') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(':') => Ok((a.to_string(), b.to_string())),
        _ => Err(ConfigError(format!("pairs: `{s}` is not of the form `a:b`"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    /// Builds a config from defaults overlaid with `values`.
    pub fn from_values(values: &BTreeMap<String, String>) -> Result<Self> {
        for key in values.keys() {
            if !is_known(key) {
                return Err(ConfigError(format!("unknown key `{key}`")));
            }
        }
        let get = |key: &str| -> &str {
            values
                .get(key)
                .map(String::as_str)
                .or_else(|| KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d))
                .expect("key is in the table")
        };
        let num = |key: &str| parse_num::<usize>(key, get(key));
        let float = |key: &str| parse_num::<f64>(key, get(key));

        let pairs = get("pairs")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_pair)
            .collect::<Result<Vec<_>>>()?;
        let mut languages: Vec<String> = parse_list("languages", get("languages"))?;
        if languages.is_empty() {
            for (a, b) in &pairs {
                for l in [a, b] {
                    if !languages.contains(l) {
                        languages.push(l.clone());
                    }
                }
            }
        }
        let lambda_grid = match get("lambda_grid") {
            "" => None,
            "default" => Some(DEFAULT_LAMBDA_GRID.to_vec()),
            v => Some(parse_list("lambda_grid", v)?),
        };
        let cfg = Self {
            corpus: optional_path(get("corpus")),
            languages,
            pairs,
            mode: get("mode")
                .parse()
                .map_err(|e: cr5::Error| ConfigError(format!("mode: {e}")))?,
            n_queries: num("n_queries")?,
            n_valid: num("n_valid")?,
            n_candidates: num("n_candidates")?,
            pre: PreprocessConfig {
                max_vocab: num("max_vocab")?,
                min_doc_freq: num("min_doc_freq")? as u64,
                min_unique: num("min_unique")?,
                max_unique: num("max_unique")?,
            },
            lambda: float("lambda")?,
            lambda_grid,
            rank: num("rank")?,
            tol: SolverTolerances {
                cg_eps: float("cg_eps")?,
                cg_max_iter: num("cg_max_iter")?,
                eig_eps: float("eig_eps")?,
                eig_max_iter: num("eig_max_iter")?,
            },
            seed: parse_num("seed", get("seed"))?,
            threads: num("threads")?,
            measures: parse_list("measure", get("measure"))?,
            ks: parse_list("k", get("k"))?,
            k_nn: num("k_nn")?,
            keep_classifier: parse_num("keep_classifier", get("keep_classifier"))?,
            split: optional_path(get("split")),
            model: optional_path(get("model")),
            report: optional_path(get("report")),
            input: optional_path(get("input")),
            output: optional_path(get("output")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        for (a, b) in &self.pairs {
            for l in [a, b] {
                if !self.languages.contains(l) {
                    return Err(ConfigError(format!("pair language `{l}` is not listed in languages")));
                }
            }
            if a == b {
                return Err(ConfigError(format!("pair `{a}:{b}` repeats a language")));
            }
        }
        let paths = [
            &self.corpus,
            &self.split,
            &self.model,
            &self.report,
            &self.input,
            &self.output,
        ];
        let named: Vec<&PathBuf> = paths
            .iter()
            .filter_map(|p| p.as_ref())
            .filter(|p| p.as_os_str() != "-")
            .collect();
        for (i, p) in named.iter().enumerate() {
            if named[..i].contains(p) {
                return Err(ConfigError(format!(
                    "path `{}` is used for two different files",
                    p.display()
                )));
            }
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(ConfigError("k: cutoffs must be positive".into()));
        }
        if self.measures.is_empty() {
            return Err(ConfigError("measure: at least one measure is required".into()));
        }
        let positive = |l: f64| l > 0.0;
        if !positive(self.lambda) || !self.lambda_grid.iter().flatten().all(|&l| positive(l)) {
            return Err(ConfigError("lambda: values must be positive".into()));
        }
        if self.lambda_grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(ConfigError("lambda_grid: empty grid".into()));
        }
        Ok(())
    }

    pub fn fit(&self, lambda: f64) -> FitConfig {
        FitConfig {
            lambda,
            rank: self.rank,
            tol: self.tol,
            seed: self.seed,
        }
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            measures: self.measures.clone(),
            ks: self.ks.clone(),
            k_nn: self.k_nn,
        }
    }

    /// Serializes every key, for the run manifest.
    pub fn to_text(values: &BTreeMap<String, String>) -> String {
        let mut out = String::new();
        for (key, default, _) in KEYS {
            let v = values.get(*key).map_or(*default, String::as_str);
            out.push_str(&format!("{key} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_values(&BTreeMap::new()).unwrap();
        assert_eq!(cfg.rank, 300);
        assert_eq!(cfg.tol, SolverTolerances::default());
        assert_eq!(cfg.pre, PreprocessConfig::default());
        assert_eq!(cfg.mode, SplitMode::Joint);
        assert_eq!(cfg.ks, vec![1, 5, 10]);
        assert_eq!(cfg.measures, vec![Measure::Cosine]);
        assert_eq!(cfg.lambda_grid, None);
    }

    #[test]
    fn parses_file_text() {
        let text = "# run\npairs = da:vi, en:it\nn-queries=20\n\nmeasure = cosine,csls\nlambda_grid = 0.1, 1\n";
        let cfg = RunConfig::from_values(&parse_config_text(text).unwrap()).unwrap();
        assert_eq!(cfg.pairs, vec![("da".into(), "vi".into()), ("en".into(), "it".into())]);
        assert_eq!(cfg.languages, vec!["da", "vi", "en", "it"]);
        assert_eq!(cfg.n_queries, 20);
        assert_eq!(cfg.measures, vec![Measure::Cosine, Measure::Csls]);
        assert_eq!(cfg.lambda_grid, Some(vec![0.1, 1.0]));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_text("nonsense\n").unwrap_err().0.contains("line 1"));
        assert!(parse_config_text("x = 1\n").unwrap_err().0.contains("unknown key"));
        assert!(parse_config_text("rank=1\nrank=2\n")
            .unwrap_err()
            .0
            .contains("duplicate"));
        assert!(RunConfig::from_values(&values(&[("rank", "lots")])).is_err());
        assert!(RunConfig::from_values(&values(&[("pairs", "da-vi")])).is_err());
        assert!(RunConfig::from_values(&values(&[("pairs", "da:vi"), ("languages", "da")])).is_err());
        assert!(RunConfig::from_values(&values(&[("model", "a"), ("split", "a")])).is_err());
        assert!(RunConfig::from_values(&values(&[("mode", "sideways")])).is_err());
        assert!(RunConfig::from_values(&values(&[("k", "0")])).is_err());
        assert!(RunConfig::from_values(&values(&[("lambda", "-1")])).is_err());
    }

    #[test]
    fn stdin_and_stdout_may_share_the_dash() {
        let cfg = RunConfig::from_values(&values(&[("input", "-"), ("output", "-")])).unwrap();
        assert_eq!(cfg.input, Some(PathBuf::from("-")));
    }
}
