use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RawDocument;
use crate::error::{Error, Result};

pub type LanguagePair = (String, String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// One model over the union of all pairwise intersections.
    Joint,
    /// One model per language pair.
    Pairwise,
    /// Two pairs sharing a pivot; the end languages' shared concepts never reach training.
    Transitive,
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Joint => "joint",
            SplitMode::Pairwise => "pairwise",
            SplitMode::Transitive => "transitive",
        })
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(SplitMode::Joint),
            "pairwise" => Ok(SplitMode::Pairwise),
            "transitive" => Ok(SplitMode::Transitive),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected joint, pairwise or transitive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitParams {
    /// Pairs to evaluate. In transitive mode: exactly two pairs sharing one pivot language.
    pub pairs: Vec<LanguagePair>,
    pub n_queries: usize,
    pub n_valid: usize,
    pub n_candidates: usize,
    pub mode: SplitMode,
    pub seed: u64,
}

/// Held-out query concepts, retrieval candidates and training concepts.
///
/// Everything is stored as concept identifiers; documents are looked up in the corpus
/// the split was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSplit {
    pub mode: SplitMode,
    pub seed: u64,
    /// Evaluation pairs. In transitive mode the end pair is appended last.
    pub pairs: Vec<LanguagePair>,
    pub end_pair: Option<LanguagePair>,
    /// Test query concepts, parallel to `pairs`.
    pub test_queries: Vec<Vec<String>>,
    /// Validation query concepts, parallel to `pairs`.
    pub valid_queries: Vec<Vec<String>>,
    /// Retrieval candidates per target language.
    pub candidates: BTreeMap<String, Vec<String>>,
    /// Training concepts per training pair.
    pub train: Vec<(LanguagePair, Vec<String>)>,
}

/// `(language, concept) → document` lookup over a corpus.
pub struct DocIndex<'a> {
    map: HashMap<(&'a str, &'a str), &'a RawDocument>,
}

impl<'a> DocIndex<'a> {
    /// Fails on a repeated `(language, concept)` pair.
    pub fn new(docs: &'a [RawDocument]) -> Result<Self> {
        let mut map = HashMap::with_capacity(docs.len());
        for d in docs {
            if map.insert((d.language.as_str(), d.concept.as_str()), d).is_some() {
                return Err(Error::Split(format!(
                    "duplicate document for language `{}` concept `{}`",
                    d.language, d.concept
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn get(&self, language: &str, concept: &str) -> Option<&'a RawDocument> {
        self.map.get(&(language, concept)).copied()
    }

    pub fn require(&self, language: &str, concept: &str) -> Result<&'a RawDocument> {
        self.get(language, concept).ok_or_else(|| {
            Error::Split(format!(
                "split refers to concept `{concept}` missing from `{language}` in the corpus"
            ))
        })
    }
}

fn concepts_by_language(docs: &[RawDocument]) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for d in docs {
        out.entry(d.language.as_str()).or_default().insert(d.concept.as_str());
    }
    out
}

fn transitive_end_pair(pairs: &[LanguagePair]) -> Result<LanguagePair> {
    let invalid =
        || Error::Split("transitive mode needs exactly two pairs sharing one pivot language, e.g. da-en,vi-en".into());
    let [(a1, a2), (b1, b2)] = pairs else {
        return Err(invalid());
    };
    let (end_a, end_b) = if a2 == b2 {
        (a1, b1)
    } else if a1 == b1 {
        (a2, b2)
    } else if a1 == b2 {
        (a2, b1)
    } else if a2 == b1 {
        (a1, b2)
    } else {
        return Err(invalid());
    };
    if end_a == end_b {
        return Err(invalid());
    }
    Ok((end_a.clone(), end_b.clone()))
}

/// Samples query, validation and candidate concepts and derives the training concepts.
pub fn make_splits(docs: &[RawDocument], params: &SplitParams) -> Result<EvaluationSplit> {
    if params.pairs.is_empty() {
        return Err(Error::Split("no language pairs given".into()));
    }
    for (a, b) in &params.pairs {
        if a == b {
            return Err(Error::Split(format!("pair `{a}-{b}` repeats a language")));
        }
    }
    DocIndex::new(docs)?;
    let by_lang = concepts_by_language(docs);
    let empty = BTreeSet::new();
    let concepts_of = |l: &str| by_lang.get(l).unwrap_or(&empty);
    let intersect = |a: &str, b: &str| -> Vec<&str> { concepts_of(a).intersection(concepts_of(b)).copied().collect() };

    let end_pair = match params.mode {
        SplitMode::Transitive => Some(transitive_end_pair(&params.pairs)?),
        _ => None,
    };
    let mut pairs = params.pairs.clone();
    if let Some(end) = &end_pair {
        pairs.push(end.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let required = params.n_queries + params.n_valid;
    let mut test_queries = Vec::with_capacity(pairs.len());
    let mut valid_queries = Vec::with_capacity(pairs.len());
    let mut excluded: BTreeSet<&str> = BTreeSet::new();
    for (a, b) in &pairs {
        let mut inter = intersect(a, b);
        if inter.len() <= required {
            return Err(Error::IntersectionTooSmall {
                first: a.clone(),
                second: b.clone(),
                available: inter.len(),
                required,
            });
        }
        inter.shuffle(&mut rng);
        let mut test: Vec<&str> = inter[..params.n_queries].to_vec();
        let mut valid: Vec<&str> = inter[params.n_queries..required].to_vec();
        test.sort_unstable();
        valid.sort_unstable();
        excluded.extend(test.iter().chain(&valid));
        test_queries.push(test.into_iter().map(String::from).collect::<Vec<_>>());
        valid_queries.push(valid.into_iter().map(String::from).collect::<Vec<_>>());
    }

    let languages: BTreeSet<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    let mut candidates = BTreeMap::new();
    for lang in languages {
        let mut chosen: BTreeSet<&str> = BTreeSet::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            if a == lang || b == lang {
                chosen.extend(test_queries[i].iter().map(String::as_str));
                chosen.extend(valid_queries[i].iter().map(String::as_str));
            }
        }
        let mut fill: Vec<&str> = concepts_of(lang)
            .iter()
            .copied()
            .filter(|c| !chosen.contains(c))
            .collect();
        fill.shuffle(&mut rng);
        let room = params.n_candidates.saturating_sub(chosen.len());
        chosen.extend(fill.into_iter().take(room));
        candidates.insert(
            lang.to_string(),
            chosen.into_iter().map(String::from).collect::<Vec<_>>(),
        );
    }

    let end_shared: BTreeSet<&str> = match &end_pair {
        Some((a, b)) => intersect(a, b).into_iter().collect(),
        None => BTreeSet::new(),
    };
    let train = params
        .pairs
        .iter()
        .map(|(a, b)| {
            let concepts = intersect(a, b)
                .into_iter()
                .filter(|c| !excluded.contains(c) && !end_shared.contains(c))
                .map(String::from)
                .collect();
            ((a.clone(), b.clone()), concepts)
        })
        .collect();

    Ok(EvaluationSplit {
        mode: params.mode,
        seed: params.seed,
        pairs,
        end_pair,
        test_queries,
        valid_queries,
        candidates,
        train,
    })
}

impl EvaluationSplit {
    /// Training documents of one training pair.
    pub fn pair_train_docs(&self, docs: &[RawDocument], pair: &LanguagePair) -> Result<Vec<RawDocument>> {
        let (_, concepts) = self
            .train
            .iter()
            .find(|(p, _)| p == pair)
            .ok_or_else(|| Error::Split(format!("`{}-{}` is not a training pair", pair.0, pair.1)))?;
        let index = DocIndex::new(docs)?;
        let mut out = Vec::with_capacity(2 * concepts.len());
        for c in concepts {
            for lang in [&pair.0, &pair.1] {
                out.push(index.require(lang, c)?.clone());
            }
        }
        Ok(out)
    }

    /// Union of every training pair's documents, each document once, in corpus order.
    pub fn train_docs(&self, docs: &[RawDocument]) -> Vec<RawDocument> {
        let mut keep: BTreeSet<(&str, &str)> = BTreeSet::new();
        for ((a, b), concepts) in &self.train {
            for c in concepts {
                keep.insert((a, c));
                keep.insert((b, c));
            }
        }
        docs.iter()
            .filter(|d| keep.contains(&(d.language.as_str(), d.concept.as_str())))
            .cloned()
            .collect()
    }

    pub fn training_pairs(&self) -> impl Iterator<Item = &LanguagePair> {
        self.train.iter().map(|(p, _)| p)
    }

    /// Every concept held out as a test or validation query for any pair.
    pub fn held_out_concepts(&self) -> BTreeSet<&str> {
        self.test_queries
            .iter()
            .chain(&self.valid_queries)
            .flatten()
            .map(String::as_str)
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "[meta]")?;
        writeln!(w, "mode\t{}", self.mode)?;
        writeln!(w, "seed\t{}", self.seed)?;
        writeln!(w, "[pairs]")?;
        for (a, b) in &self.pairs {
            writeln!(w, "{a}\t{b}")?;
        }
        if let Some((a, b)) = &self.end_pair {
            writeln!(w, "[end_pair]")?;
            writeln!(w, "{a}\t{b}")?;
        }
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            writeln!(w, "[test\t{a}\t{b}]")?;
            for c in &self.test_queries[i] {
                writeln!(w, "{c}")?;
            }
            writeln!(w, "[valid\t{a}\t{b}]")?;
            for c in &self.valid_queries[i] {
                writeln!(w, "{c}")?;
            }
        }
        for (lang, concepts) in &self.candidates {
            writeln!(w, "[candidates\t{lang}]")?;
            for c in concepts {
                writeln!(w, "{c}")?;
            }
        }
        for ((a, b), concepts) in &self.train {
            writeln!(w, "[train\t{a}\t{b}]")?;
            for c in concepts {
                writeln!(w, "{c}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Split(format!("line {line}: {message}"));
        let mut sections: Vec<(usize, Vec<String>, Vec<String>)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| bad(i + 1, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                sections.push((i + 1, header.split('\t').map(String::from).collect(), Vec::new()));
            } else if let Some(last) = sections.last_mut() {
                last.2.push(line);
            } else {
                return Err(bad(i + 1, "content before first section".into()));
            }
        }

        let mut mode = None;
        let mut seed = None;
        let mut pairs = Vec::new();
        let mut end_pair = None;
        let mut test: HashMap<LanguagePair, Vec<String>> = HashMap::new();
        let mut valid: HashMap<LanguagePair, Vec<String>> = HashMap::new();
        let mut candidates = BTreeMap::new();
        let mut train = Vec::new();
        let parse_pair = |line: usize, s: &str| -> Result<LanguagePair> {
            s.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| bad(line, format!("expected `lang<TAB>lang`, got `{s}`")))
        };
        for (line, header, body) in sections {
            let h: Vec<&str> = header.iter().map(String::as_str).collect();
            match h.as_slice() {
                ["meta"] => {
                    for row in &body {
                        match row.split_once('\t') {
                            Some(("mode", m)) => mode = Some(m.parse::<SplitMode>()?),
                            Some(("seed", s)) => {
                                seed = Some(s.parse::<u64>().map_err(|_| bad(line, "bad seed".into()))?)
                            }
                            _ => return Err(bad(line, format!("unknown meta entry `{row}`"))),
                        }
                    }
                }
                ["pairs"] => {
                    for row in &body {
                        pairs.push(parse_pair(line, row)?);
                    }
                }
                ["end_pair"] => {
                    let [row] = body.as_slice() else {
                        return Err(bad(line, "end_pair must hold one pair".into()));
                    };
                    end_pair = Some(parse_pair(line, row)?);
                }
                ["test", a, b] => {
                    test.insert((a.to_string(), b.to_string()), body);
                }
                ["valid", a, b] => {
                    valid.insert((a.to_string(), b.to_string()), body);
                }
                ["candidates", l] => {
                    candidates.insert(l.to_string(), body);
                }
                ["train", a, b] => train.push(((a.to_string(), b.to_string()), body)),
                _ => return Err(bad(line, format!("unknown section `{}`", header.join(" ")))),
            }
        }
        let mode = mode.ok_or_else(|| Error::Split("missing mode".into()))?;
        let seed = seed.ok_or_else(|| Error::Split("missing seed".into()))?;
        let mut test_queries = Vec::with_capacity(pairs.len());
        let mut valid_queries = Vec::with_capacity(pairs.len());
        for p in &pairs {
            test_queries.push(
                test.remove(p)
                    .ok_or_else(|| Error::Split(format!("missing test section for {}-{}", p.0, p.1)))?,
            );
            valid_queries.push(valid.remove(p).unwrap_or_default());
        }
        Ok(Self {
            mode,
            seed,
            pairs,
            end_pair,
            test_queries,
            valid_queries,
            candidates,
            train,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(spec: &[(&str, std::ops::Range<usize>)]) -> Vec<RawDocument> {
        let mut docs = Vec::new();
        for (lang, range) in spec {
            for c in range.clone() {
                docs.push(RawDocument::new(*lang, format!("c{c:03}"), format!("{lang} text {c}")).unwrap());
            }
        }
        docs
    }

    fn params(pairs: &[(&str, &str)], mode: SplitMode) -> SplitParams {
        SplitParams {
            pairs: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
            n_queries: 2,
            n_valid: 2,
            n_candidates: 100,
            mode,
            seed: 17,
        }
    }

    #[test]
    fn pairwise_training_intersection_size() {
        let docs = corpus(&[("en", 0..10), ("it", 0..10)]);
        let split = make_splits(&docs, &params(&[("en", "it")], SplitMode::Pairwise)).unwrap();
        assert_eq!(split.train[0].1.len(), 6);
        assert_eq!(
            split.pair_train_docs(&docs, &("en".into(), "it".into())).unwrap().len(),
            12
        );
    }

    #[test]
    fn deterministic() {
        let docs = corpus(&[("en", 0..40), ("it", 10..50)]);
        let p = params(&[("en", "it")], SplitMode::Joint);
        assert_eq!(make_splits(&docs, &p).unwrap(), make_splits(&docs, &p).unwrap());
        let mut other = p.clone();
        other.seed = 18;
        assert_ne!(make_splits(&docs, &p).unwrap(), make_splits(&docs, &other).unwrap());
    }

    #[test]
    fn invariants_hold() {
        let docs = corpus(&[("en", 0..60), ("it", 0..40), ("da", 20..60)]);
        let mut p = params(&[("en", "it"), ("en", "da")], SplitMode::Joint);
        p.n_candidates = 25;
        let split = make_splits(&docs, &p).unwrap();
        let held = split.held_out_concepts();
        for (i, (_, b)) in split.pairs.iter().enumerate() {
            let t: BTreeSet<_> = split.test_queries[i].iter().collect();
            assert!(split.valid_queries[i].iter().all(|c| !t.contains(c)));
            let cands = &split.candidates[b];
            for q in &split.test_queries[i] {
                assert_eq!(cands.iter().filter(|c| *c == q).count(), 1);
            }
        }
        for cands in split.candidates.values() {
            let set: BTreeSet<_> = cands.iter().collect();
            assert_eq!(set.len(), cands.len());
        }
        for d in split.train_docs(&docs) {
            assert!(!held.contains(d.concept.as_str()));
        }
    }

    #[test]
    fn transitive_excludes_end_pair_concepts() {
        // da ∩ vi = {c20..c29}; pivot en covers everything.
        let docs = corpus(&[("en", 0..50), ("da", 0..30), ("vi", 20..50)]);
        let split = make_splits(&docs, &params(&[("da", "en"), ("vi", "en")], SplitMode::Transitive)).unwrap();
        assert_eq!(split.end_pair, Some(("da".into(), "vi".into())));
        assert_eq!(split.pairs.len(), 3);
        let train = split.train_docs(&docs);
        assert!(!train.is_empty());
        for d in &train {
            let n: usize = d.concept[1..].parse().unwrap();
            assert!(!(20..30).contains(&n), "{} leaked into training", d.concept);
        }
    }

    #[test]
    fn transitive_three_shared_concepts() {
        let docs = corpus(&[("en", 0..40), ("da", 0..20), ("vi", 17..40)]);
        let mut p = params(&[("da", "en"), ("vi", "en")], SplitMode::Transitive);
        p.n_queries = 1;
        p.n_valid = 1;
        let split = make_splits(&docs, &p).unwrap();
        let train: BTreeSet<String> = split.train_docs(&docs).into_iter().map(|d| d.concept).collect();
        for c in ["c017", "c018", "c019"] {
            assert!(!train.contains(c));
        }
    }

    #[test]
    fn small_intersection_is_error() {
        let docs = corpus(&[("en", 0..4), ("it", 0..4)]);
        match make_splits(&docs, &params(&[("en", "it")], SplitMode::Pairwise)) {
            Err(Error::IntersectionTooSmall {
                available, required, ..
            }) => {
                assert_eq!((available, required), (4, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let docs = corpus(&[("en", 0..50), ("da", 0..30), ("vi", 20..50)]);
        let split = make_splits(&docs, &params(&[("da", "en"), ("vi", "en")], SplitMode::Transitive)).unwrap();
        let mut buf = Vec::new();
        split.write(&mut buf).unwrap();
        assert_eq!(EvaluationSplit::read(&buf[..]).unwrap(), split);
    }

    #[test]
    fn transitive_needs_pivot() {
        let docs = corpus(&[("en", 0..50), ("da", 0..30), ("vi", 20..50), ("it", 0..50)]);
        assert!(make_splits(&docs, &params(&[("da", "en"), ("vi", "it")], SplitMode::Transitive)).is_err());
        assert!(make_splits(&docs, &params(&[("da", "en")], SplitMode::Transitive)).is_err());
    }
}
