//! Ranking candidates by cosine or CSLS similarity and precision-at-k evaluation.

mod report;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{EvalReport, EvalRow};

/// Default CSLS neighborhood size.
pub const DEFAULT_K_NN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Cosine,
    Csls,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Cosine => "cosine",
            Measure::Csls => "csls",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Measure::Cosine),
            "csls" => Ok(Measure::Csls),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure `{other}` (expected cosine or csls)"
            ))),
        }
    }
}

/// `uᵀv / (‖u‖‖v‖)`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::UndefinedSimilarity("cosine with a zero vector".into()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Target-language retrieval candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub language: String,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl CandidatePool {
    pub fn new(language: impl Into<String>, ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: vectors.len(),
            });
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate candidate id `{dup}`")));
        }
        check_dims(&vectors)?;
        Ok(Self {
            language: language.into(),
            ids,
            vectors,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn check_dims(vectors: &[Vec<f64>]) -> Result<()> {
    if let Some(first) = vectors.first() {
        if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: bad.len(),
            });
        }
    }
    Ok(())
}

/// Unit-normalized copies; zero vectors become `None`.
struct Normalized {
    dim: usize,
    data: Vec<f64>,
    present: Vec<bool>,
}

impl Normalized {
    fn new(vectors: &[Vec<f64>]) -> Self {
        let dim = vectors.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(vectors.len() * dim);
        let mut present = Vec::with_capacity(vectors.len());
        for v in vectors {
            let n = norm(v);
            present.push(n > 0.0);
            data.extend(v.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }));
        }
        Self { dim, data, present }
    }

    fn len(&self) -> usize {
        self.present.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine of `self[i]` with every row of `other`; `None` where undefined.
    fn cosines(&self, i: usize, other: &Normalized, out: &mut Vec<Option<f64>>) {
        out.clear();
        if !self.present[i] {
            out.resize(other.len(), None);
            return;
        }
        let q = self.row(i);
        out.extend((0..other.len()).map(|j| other.present[j].then(|| dot(q, other.row(j)).clamp(-1.0, 1.0))));
    }
}

/// Mean of the `k` largest defined values; fewer defined values are averaged as they are,
/// none gives 0.
fn mean_top_k(values: &[Option<f64>], k: usize) -> f64 {
    let mut top: Vec<f64> = Vec::with_capacity(k + 1);
    for v in values.iter().flatten() {
        if top.len() < k || *v > top[top.len() - 1] {
            let pos = top.partition_point(|t| t >= v);
            top.insert(pos, *v);
            top.truncate(k);
        }
    }
    if top.is_empty() {
        0.0
    } else {
        top.iter().sum::<f64>() / top.len() as f64
    }
}

/// Precomputed state for scoring one query pool against one candidate pool.
pub struct Scorer {
    queries: Normalized,
    candidates: Normalized,
    measure: Measure,
    /// CSLS hubness of each query among candidates, `r_T`.
    query_hub: Vec<f64>,
    /// CSLS hubness of each candidate among queries, `r_S`.
    candidate_hub: Vec<f64>,
}

impl Scorer {
    /// Undefined cosines (zero vectors) score `−∞` and are left out of CSLS
    /// neighborhoods.
    pub fn new(queries: &[Vec<f64>], candidates: &[Vec<f64>], measure: Measure, k_nn: usize) -> Result<Self> {
        check_dims(queries)?;
        check_dims(candidates)?;
        if let (Some(q), Some(c)) = (queries.first(), candidates.first()) {
            if q.len() != c.len() {
                return Err(Error::DimensionMismatch {
                    expected: q.len(),
                    got: c.len(),
                });
            }
        }
        let queries = Normalized::new(queries);
        let candidates = Normalized::new(candidates);
        let (mut query_hub, mut candidate_hub) = (Vec::new(), Vec::new());
        if measure == Measure::Csls {
            if k_nn == 0 || k_nn > candidates.len() || k_nn > queries.len() {
                return Err(Error::InvalidArgument(format!(
                    "CSLS needs 1 ≤ k_nn ≤ pool sizes; k_nn = {k_nn}, {} queries, {} candidates",
                    queries.len(),
                    candidates.len()
                )));
            }
            query_hub = hubness(&queries, &candidates, k_nn);
            candidate_hub = hubness(&candidates, &queries, k_nn);
        }
        Ok(Self {
            queries,
            candidates,
            measure,
            query_hub,
            candidate_hub,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    /// Scores of query `i` against every candidate.
    pub fn scores(&self, i: usize) -> Vec<f64> {
        let mut cos = Vec::new();
        self.queries.cosines(i, &self.candidates, &mut cos);
        cos.iter()
            .enumerate()
            .map(|(j, c)| match (c, self.measure) {
                (None, _) => f64::NEG_INFINITY,
                (Some(c), Measure::Cosine) => *c,
                (Some(c), Measure::Csls) => 2.0 * c - self.query_hub[i] - self.candidate_hub[j],
            })
            .collect()
    }

    /// Full score matrix, one row per query.
    pub fn score_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_queries()).into_par_iter().map(|i| self.scores(i)).collect()
    }
}

fn hubness(from: &Normalized, to: &Normalized, k: usize) -> Vec<f64> {
    (0..from.len())
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            from.cosines(i, to, buf);
            mean_top_k(buf, k)
        })
        .collect()
}

/// `CSLS(q, c) = 2·cos(q, c) − r_T(q) − r_S(c)` for every pair.
pub fn csls_scores(queries: &[Vec<f64>], candidates: &[Vec<f64>], k_nn: usize) -> Result<Vec<Vec<f64>>> {
    Ok(Scorer::new(queries, candidates, Measure::Csls, k_nn)?.score_matrix())
}

/// Descending score, ties by ascending id.
fn compare(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Candidate indices ordered best first; ties go to the smaller id.
pub fn rank_indices(scores: &[f64], ids: &[String]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| compare((scores[a], &ids[a]), (scores[b], &ids[b])));
    order
}

/// Candidate ids ordered best first under `scorer` for query `i`.
pub fn rank(scorer: &Scorer, i: usize, pool: &CandidatePool) -> Vec<String> {
    rank_indices(&scorer.scores(i), pool.ids())
        .into_iter()
        .map(|j| pool.ids[j].clone())
        .collect()
}

/// 0-based rank of candidate `target` in the ordering [`rank_indices`] would produce.
pub fn position_of(scores: &[f64], ids: &[String], target: usize) -> usize {
    let key = (scores[target], ids[target].as_str());
    (0..scores.len())
        .filter(|&j| compare((scores[j], &ids[j]), key) == Ordering::Less)
        .count()
}

/// Fraction of positions below each `k`.
pub fn precision_from_positions(positions: &[usize], ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            if positions.is_empty() {
                0.0
            } else {
                positions.iter().filter(|&&p| p < k).count() as f64 / positions.len() as f64
            }
        })
        .collect()
}

/// P@k for explicit rankings: the share of queries whose relevant id is among the first k.
pub fn precision_at_k(
    rankings: &[(String, Vec<String>)],
    relevance: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<Vec<f64>> {
    let positions = rankings
        .iter()
        .map(|(query, ranked)| {
            let want = relevance
                .get(query)
                .ok_or_else(|| Error::MissingRelevance(query.clone()))?;
            ranked
                .iter()
                .position(|id| id == want)
                .ok_or_else(|| Error::InvalidArgument(format!("relevant id `{want}` for `{query}` is not ranked")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(precision_from_positions(&positions, ks))
}

/// Queries whose correct candidate shares their id.
pub struct QuerySet {
    pub language: String,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

/// Evaluates one direction: P@k for each `k`, with the relevant candidate being the one
/// with the query's id.
pub fn evaluate(
    queries: &QuerySet,
    pool: &CandidatePool,
    measure: Measure,
    k_nn: usize,
    ks: &[usize],
) -> Result<Vec<f64>> {
    let index: std::collections::HashMap<&str, usize> =
        pool.ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let targets = queries
        .ids
        .iter()
        .map(|q| {
            index
                .get(q.as_str())
                .copied()
                .ok_or_else(|| Error::MissingRelevance(q.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let scorer = Scorer::new(&queries.vectors, &pool.vectors, measure, k_nn)?;
    let positions: Vec<usize> = (0..queries.ids.len())
        .into_par_iter()
        .map(|i| position_of(&scorer.scores(i), &pool.ids, targets[i]))
        .collect();
    Ok(precision_from_positions(&positions, ks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i:05}")).collect()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[2.0, 1.0], &[2.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::UndefinedSimilarity(_))
        ));
        assert!(cosine(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn csls_single_pair_is_zero() {
        let s = csls_scores(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]], 1).unwrap();
        assert!(s[0][0].abs() < 1e-15);
    }

    #[test]
    fn csls_identical_vectors_all_zero() {
        let v = vec![vec![0.3, -0.2, 0.9]; 6];
        let s = csls_scores(&v[..4], &v, 3).unwrap();
        assert!(s.iter().flatten().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn csls_rejects_small_pools() {
        let v = vec![vec![1.0, 0.0]; 3];
        assert!(csls_scores(&v, &v[..2], 3).is_err());
        assert!(csls_scores(&v[..2], &v, 3).is_err());
        assert!(csls_scores(&v, &v, 0).is_err());
    }

    /// Direct transcription of the CSLS definition with explicit sorting.
    fn naive_csls(q: &[Vec<f64>], c: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
        let cos = |a: &Vec<f64>, b: &Vec<f64>| cosine(a, b).unwrap();
        let knn_mean = |x: &Vec<f64>, pool: &[Vec<f64>]| {
            let mut s: Vec<f64> = pool.iter().map(|y| cos(x, y)).collect();
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            s[..k].iter().sum::<f64>() / k as f64
        };
        let rt: Vec<f64> = q.iter().map(|x| knn_mean(x, c)).collect();
        let rs: Vec<f64> = c.iter().map(|y| knn_mean(y, q)).collect();
        q.iter()
            .enumerate()
            .map(|(i, x)| {
                c.iter()
                    .enumerate()
                    .map(|(j, y)| 2.0 * cos(x, y) - rt[i] - rs[j])
                    .collect()
            })
            .collect()
    }

    #[test]
    fn csls_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_vectors(&mut rng, 40, 6);
        let c = random_vectors(&mut rng, 70, 6);
        let fast = csls_scores(&q, &c, 5).unwrap();
        let slow = naive_csls(&q, &c, 5);
        let cid = ids(70);
        for (f, s) in fast.iter().zip(&slow) {
            for (a, b) in f.iter().zip(s) {
                assert!((a - b).abs() <= 1e-12);
            }
            assert_eq!(rank_indices(f, &cid), rank_indices(s, &cid));
        }
    }

    #[test]
    fn ranking_puts_identical_vector_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_vectors(&mut rng, 20, 5);
        let pool = CandidatePool::new("t", ids(20), c.clone()).unwrap();
        let scorer = Scorer::new(&[c[7].clone()], pool.vectors(), Measure::Cosine, 1).unwrap();
        assert_eq!(rank(&scorer, 0, &pool)[0], "c00007");
    }

    #[test]
    fn ties_break_by_id() {
        let ids = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        assert_eq!(rank_indices(&[0.5, 0.5, 0.9], &ids), vec![2, 1, 0]);
        assert_eq!(position_of(&[0.5, 0.5, 0.9], &ids, 0), 2);
        assert_eq!(position_of(&[0.5, 0.5, 0.9], &ids, 1), 1);
    }

    #[test]
    fn zero_vectors_score_negative_infinity() {
        let scorer = Scorer::new(&[vec![1.0, 0.0]], &[vec![0.0, 0.0], vec![0.0, 1.0]], Measure::Cosine, 1).unwrap();
        assert_eq!(scorer.scores(0), vec![f64::NEG_INFINITY, 0.0]);
        let csls = Scorer::new(
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
            &[vec![0.0, 0.0], vec![1.0, 1.0]],
            Measure::Csls,
            1,
        )
        .unwrap();
        assert!(csls.scores(0).iter().all(|s| *s == f64::NEG_INFINITY));
        assert!(csls.scores(1)[1].is_finite());
    }

    #[test]
    fn precision_examples() {
        let rel: BTreeMap<String, String> = [("q1", "a"), ("q2", "b")]
            .into_iter()
            .map(|(q, c)| (q.to_string(), c.to_string()))
            .collect();
        let first = vec![
            ("q1".to_string(), vec!["a".to_string(), "b".to_string()]),
            ("q2".to_string(), vec!["b".to_string(), "a".to_string()]),
        ];
        assert_eq!(precision_at_k(&first, &rel, &[1, 5, 10]).unwrap(), vec![1.0; 3]);
        let sixth: Vec<String> = ["x1", "x2", "x3", "x4", "x5", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let r = vec![("q1".to_string(), sixth)];
        assert_eq!(precision_at_k(&r, &rel, &[1, 5, 10]).unwrap(), vec![0.0, 0.0, 1.0]);
        let missing = vec![("q9".to_string(), vec!["a".to_string()])];
        assert!(matches!(
            precision_at_k(&missing, &rel, &[1]),
            Err(Error::MissingRelevance(_))
        ));
    }

    #[test]
    fn pool_validation() {
        assert!(CandidatePool::new("t", vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(CandidatePool::new("t", vec!["a".into()], vec![]).is_err());
        assert!(CandidatePool::new("t", vec!["a".into(), "b".into()], vec![vec![1.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn evaluate_counts_positions() {
        // Query i matches candidate i exactly, so cosine ranks it first.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_vectors(&mut rng, 30, 8);
        let pool = CandidatePool::new("t", ids(30), c.clone()).unwrap();
        let q = QuerySet {
            language: "s".into(),
            ids: ids(30)[..10].to_vec(),
            vectors: c[..10].to_vec(),
        };
        let p = evaluate(&q, &pool, Measure::Cosine, 10, &[1, 5, 10]).unwrap();
        assert_eq!(p, vec![1.0, 1.0, 1.0]);
        let bad = QuerySet {
            language: "s".into(),
            ids: vec!["nope".into()],
            vectors: vec![c[0].clone()],
        };
        assert!(evaluate(&bad, &pool, Measure::Cosine, 10, &[1]).is_err());
    }

    proptest! {
        #[test]
        fn position_agrees_with_full_sort(
            scores in proptest::collection::vec(prop_oneof![Just(0.5f64), -1.0f64..1.0], 1..60),
            target_frac in 0.0f64..1.0,
        ) {
            let ids = ids(scores.len());
            let target = ((scores.len() - 1) as f64 * target_frac) as usize;
            let order = rank_indices(&scores, &ids);
            let pos = order.iter().position(|&j| j == target).unwrap();
            prop_assert_eq!(position_of(&scores, &ids, target), pos);
            for w in order.windows(2) {
                prop_assert!(scores[w[0]] >= scores[w[1]]);
            }
        }

        #[test]
        fn cosine_ranking_is_scale_invariant(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_vectors(&mut rng, 25, 4);
            let q = random_vectors(&mut rng, 1, 4);
            let scaled = vec![q[0].iter().map(|x| x * scale).collect::<Vec<_>>()];
            let pool = CandidatePool::new("t", ids(25), c).unwrap();
            let a = Scorer::new(&q, pool.vectors(), Measure::Cosine, 1).unwrap();
            let b = Scorer::new(&scaled, pool.vectors(), Measure::Cosine, 1).unwrap();
            prop_assert_eq!(rank(&a, 0, &pool), rank(&b, 0, &pool));
        }
    }
}
