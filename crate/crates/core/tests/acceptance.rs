//! Acceptance suite. Runs as a plain binary and prints one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cr5::corpus::{make_splits, SplitMode, SplitParams};
use cr5::embed::write_model;
use cr5::linop::{block_solve, CenteredGramOperator, CsrMatrix, SolverTolerances};
use cr5::pipeline::{
    evaluate_pairs, model_scopes, preprocess, train_model, EvalConfig, PreprocessConfig, QueryRole, TrainConfig,
};
use cr5::retrieval::{cosine, csls_scores, evaluate, rank_indices, CandidatePool, Measure, QuerySet, Scorer};
use cr5::solver::oracle::{max_principal_angle, orthonormal_rows_error, DenseProblem};
use cr5::solver::{direct_fit, fit, FitConfig, TrainSet};
use cr5::synthetic::{generate, SyntheticConfig};

type Outcome = Result<String, String>;
type RunBytes = (Vec<u8>, Vec<u8>, Vec<u8>);
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random sparse instance; with `split_at`, even rows use columns `0..split_at` and odd
/// rows the rest, like documents of two languages.
fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize, split_at: Option<usize>) -> TrainSet {
    let density = rng.gen_range(0.15..0.4);
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let cols = match split_at {
                Some(s) if i % 2 == 0 => 0..s,
                Some(s) => s..p,
                None => 0..p,
            };
            let mut row = Vec::new();
            for c in cols {
                if rng.gen::<f64>() < density {
                    row.push((c, rng.gen_range(0.05..1.0)));
                }
            }
            row
        })
        .collect();
    let labels = (0..n).map(|i| if i < k { i } else { rng.gen_range(0..k) }).collect();
    TrainSet::new(CsrMatrix::from_rows(p, &rows).unwrap(), labels, k).unwrap()
}

struct OracleCase {
    train: TrainSet,
    blocks: Vec<Range<usize>>,
    cfg: FitConfig,
}

/// Twenty instances with n ≤ 200, p ≤ 100, K ≤ 30, r ≤ 10 and a gap ≥ 1e-3 after the
/// r-th eigenvalue.
fn oracle_cases() -> Vec<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = Vec::new();
    while cases.len() < 20 {
        let n = rng.gen_range(40..=200);
        let p = rng.gen_range(10..=100);
        let k = rng.gen_range(5..=30);
        let r = rng.gen_range(1..=10usize.min(k - 2));
        let split_at = (cases.len() % 2 == 1).then_some(p / 2);
        let train = random_instance(&mut rng, n, p, k, split_at);
        let lambda = 10f64.powf(rng.gen_range(-1.0..1.0));
        let spectrum = DenseProblem::new(&train)
            .unwrap()
            .classifier_gram_spectrum(lambda)
            .unwrap();
        if spectrum[r - 1] - spectrum[r] < 1e-3 {
            continue;
        }
        let blocks = match split_at {
            Some(s) => vec![0..s, s..p],
            None => vec![0..p],
        };
        cases.push(OracleCase {
            train,
            blocks,
            cfg: FitConfig {
                lambda,
                rank: r,
                tol: SolverTolerances::tight(),
                seed: cases.len() as u64,
            },
        });
    }
    cases
}

fn criterion_1(cases: &[OracleCase]) -> Outcome {
    let start = Instant::now();
    let (mut worst_eig, mut worst_angle, mut worst_obj) = (0.0f64, 0.0f64, 0.0f64);
    for case in cases {
        let it = fit(&case.train, &case.blocks, &case.cfg).map_err(|e| e.to_string())?;
        let direct = direct_fit(&case.train, &case.cfg).map_err(|e| e.to_string())?;
        for (a, b) in it.eigenvalues.iter().zip(&direct.eigenvalues) {
            worst_eig = worst_eig.max((a - b).abs() / b.abs());
        }
        worst_angle = worst_angle.max(max_principal_angle(&it.phi, &direct.phi));
        let dense = DenseProblem::new(&case.train).unwrap();
        let obj_it = dense.objective(&it.w(), &it.b, case.cfg.lambda);
        let obj_direct = dense.objective(&direct.w(), &direct.b, case.cfg.lambda);
        worst_obj = worst_obj.max((obj_it - obj_direct).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst_eig <= 1e-6 && worst_angle <= 1e-4 && worst_obj <= 1e-6 && elapsed < Duration::from_secs(60),
        format!(
            "20 instances: max eigenvalue rel err {worst_eig:.2e}, max principal angle {worst_angle:.2e}, \
             max objective gap {worst_obj:.2e}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn dense_centered_gram(train: &TrainSet, lambda: f64) -> DMatrix<f64> {
    DenseProblem::new(train).unwrap().ridge_gram(lambda)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut apply_err, mut solve_err, mut sym_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_quad = f64::INFINITY;
    for trial in 0..5 {
        let (n, p) = (rng.gen_range(30..120), rng.gen_range(8..60));
        let split_at = (trial % 2 == 0).then_some(p / 3);
        let train = random_instance(&mut rng, n, p, 4, split_at);
        let lambda = rng.gen_range(0.05..3.0);
        let op = CenteredGramOperator::new(train.shared_x(), lambda).unwrap();
        let dense = dense_centered_gram(&train, lambda);
        let inverse = dense.clone().try_inverse().unwrap();
        let blocks = match split_at {
            Some(s) => vec![0..s, s..p],
            None => vec![0..p],
        };
        for _ in 0..20 {
            let u = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let v = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let au = DVector::from_vec(op.centered_apply(u.as_slice()).unwrap());
            let av = DVector::from_vec(op.centered_apply(v.as_slice()).unwrap());
            apply_err = apply_err.max((&au - &dense * &u).amax());
            sym_err = sym_err.max((u.dot(&av) - v.dot(&au)).abs());
            min_quad = min_quad.min(u.dot(&au) / u.norm_squared());
            let x = DVector::from_vec(block_solve(&op, &blocks, u.as_slice(), &SolverTolerances::tight()).unwrap());
            let want = &inverse * &u;
            solve_err = solve_err.max((x - &want).norm() / want.norm());
        }
    }
    check(
        apply_err <= 1e-10 && solve_err <= 1e-8 && sym_err <= 1e-10 && min_quad > 0.0,
        format!(
            "100 vectors: centered apply max-abs {apply_err:.2e}, block solve rel {solve_err:.2e}, \
             symmetry {sym_err:.2e}, min Rayleigh quotient {min_quad:.3e}"
        ),
    )
}

fn criterion_3(cases: &[OracleCase]) -> Outcome {
    let (mut orth, mut recon) = (0.0f64, 0.0f64);
    let mut sorted = true;
    for case in cases {
        let it = fit(&case.train, &case.blocks, &case.cfg).map_err(|e| e.to_string())?;
        let direct = direct_fit(&case.train, &case.cfg).map_err(|e| e.to_string())?;
        orth = orth.max(orthonormal_rows_error(&it.phi));
        sorted &= it.sigma.windows(2).all(|w| w[0] >= w[1]);
        let w = direct.w();
        recon = recon.max((it.w() - &w).norm() / w.norm());
    }
    check(
        orth <= 1e-6 && sorted && recon <= 1e-5,
        format!(
            "20 models: max |ΦΦᵀ − I| {orth:.2e}, sigma nonincreasing {sorted}, max reconstruction rel err {recon:.2e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let corpus = generate(&SyntheticConfig::bilingual(1200, 1)).map_err(|e| e.to_string())?;
    let pre = PreprocessConfig::default();
    let docs = preprocess(&corpus.docs, &pre);
    let split = make_splits(
        &docs,
        &SplitParams {
            pairs: vec![("xa".into(), "xb".into())],
            n_queries: 100,
            n_valid: 100,
            n_candidates: 1000,
            mode: SplitMode::Pairwise,
            seed: 11,
        },
    )
    .map_err(|e| e.to_string())?;
    let scope = &model_scopes(&split)[0];
    let cfg = TrainConfig {
        pre,
        fit: FitConfig {
            lambda: 1.0,
            rank: 32,
            tol: SolverTolerances::default(),
            seed: 1,
        },
        keep_classifier: false,
    };
    let trained = train_model(&docs, &split, scope, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate_pairs(
        &trained.model,
        &docs,
        &split,
        &scope.eval_pairs(&split),
        QueryRole::Test,
        &EvalConfig {
            measures: vec![Measure::Cosine],
            ks: vec![1, 10],
            k_nn: 10,
        },
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let queries = &split.test_queries[0];
    let mut oracle = Vec::new();
    for (q, t) in [("xa", "xb"), ("xb", "xa")] {
        let p = corpus
            .dictionary_oracle(q, t, queries, &split.candidates[t], &[1])
            .map_err(|e| e.to_string())?;
        oracle.push(p[0]);
    }
    let get = |q: &str, t: &str, k: usize| report.get(q, t, Measure::Cosine, k).unwrap_or(0.0);
    let (ab1, ab10, ba1, ba10) = (
        get("xa", "xb", 1),
        get("xa", "xb", 10),
        get("xb", "xa", 1),
        get("xb", "xa", 10),
    );
    check(
        ab1 >= 0.90
            && ba1 >= 0.90
            && ab10 >= 0.98
            && ba10 >= 0.98
            && oracle.iter().all(|&p| p >= 0.97)
            && elapsed < Duration::from_secs(300),
        format!(
            "xa→xb P@1 {ab1:.2} P@10 {ab10:.2}, xb→xa P@1 {ba1:.2} P@10 {ba10:.2} \
             (dictionary oracle P@1 {:.2}/{:.2}), {:.1}s",
            oracle[0],
            oracle[1],
            elapsed.as_secs_f64()
        ),
    )
}

fn end_pair_p1(mode: SplitMode) -> Result<(f64, f64), String> {
    let corpus = generate(&SyntheticConfig::transitive(3000, 600, 1)).map_err(|e| e.to_string())?;
    let pre = PreprocessConfig::default();
    let docs = preprocess(&corpus.docs, &pre);
    let mut pairs = vec![
        ("xa".to_string(), "xp".to_string()),
        ("xb".to_string(), "xp".to_string()),
    ];
    if mode == SplitMode::Joint {
        pairs.push(("xa".into(), "xb".into()));
    }
    let split = make_splits(
        &docs,
        &SplitParams {
            pairs,
            n_queries: 100,
            n_valid: 100,
            n_candidates: 1000,
            mode,
            seed: 11,
        },
    )
    .map_err(|e| e.to_string())?;
    let scope = &model_scopes(&split)[0];
    let cfg = TrainConfig {
        pre,
        fit: FitConfig {
            lambda: 1.0,
            rank: 64,
            tol: SolverTolerances::default(),
            seed: 1,
        },
        keep_classifier: false,
    };
    let trained = train_model(&docs, &split, scope, &cfg).map_err(|e| e.to_string())?;
    if mode == SplitMode::Transitive {
        let end_idx = split
            .pairs
            .iter()
            .position(|p| Some(p) == split.end_pair.as_ref())
            .ok_or("no end pair in the split")?;
        let held: std::collections::BTreeSet<&str> = split.test_queries[end_idx]
            .iter()
            .chain(&split.valid_queries[end_idx])
            .map(String::as_str)
            .collect();
        if trained.rows.iter().any(|(_, c)| held.contains(c.as_str())) {
            return Err("an end-pair held-out concept reached the training rows".into());
        }
    }
    let end = scope
        .eval_pairs(&split)
        .into_iter()
        .filter(|(_, (a, b))| (a == "xa" && b == "xb") || (a == "xb" && b == "xa"))
        .collect::<Vec<_>>();
    let report = evaluate_pairs(
        &trained.model,
        &docs,
        &split,
        &end,
        QueryRole::Test,
        &EvalConfig {
            measures: vec![Measure::Cosine],
            ks: vec![1],
            k_nn: 10,
        },
    )
    .map_err(|e| e.to_string())?;
    Ok((
        report.get("xa", "xb", Measure::Cosine, 1).unwrap_or(0.0),
        report.get("xb", "xa", Measure::Cosine, 1).unwrap_or(0.0),
    ))
}

fn criterion_5() -> Outcome {
    let (t_ab, t_ba) = end_pair_p1(SplitMode::Transitive)?;
    let (j_ab, j_ba) = end_pair_p1(SplitMode::Joint)?;
    let retained = (t_ab + t_ba) / (j_ab + j_ba).max(f64::MIN_POSITIVE);
    check(
        t_ab >= 0.5 && t_ba >= 0.5,
        format!(
            "transitive end-pair P@1 xa→xb {t_ab:.2}, xb→xa {t_ba:.2}; joint {j_ab:.2}/{j_ba:.2}; \
             retained {:.0}%",
            100.0 * retained
        ),
    )
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

/// CSLS straight from its definition, sorting every similarity list.
fn naive_csls(q: &[Vec<f64>], c: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let cos: Vec<Vec<f64>> = q
        .iter()
        .map(|x| c.iter().map(|y| cosine(x, y).unwrap()).collect())
        .collect();
    let top_mean = |mut v: Vec<f64>| {
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v[..k].iter().sum::<f64>() / k as f64
    };
    let rt: Vec<f64> = cos.iter().map(|row| top_mean(row.clone())).collect();
    let rs: Vec<f64> = (0..c.len())
        .map(|j| top_mean(cos.iter().map(|row| row[j]).collect()))
        .collect();
    cos.iter()
        .enumerate()
        .map(|(i, row)| row.iter().enumerate().map(|(j, v)| 2.0 * v - rt[i] - rs[j]).collect())
        .collect()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i:07}")).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut max_diff = 0.0f64;
    let mut mismatched = 0usize;
    for &(nq, nc, d, k) in &[(50, 80, 5, 3), (300, 500, 16, 10), (2000, 2000, 32, 10)] {
        let q = random_vectors(&mut rng, nq, d);
        let c = random_vectors(&mut rng, nc, d);
        let fast = csls_scores(&q, &c, k).map_err(|e| e.to_string())?;
        let slow = naive_csls(&q, &c, k);
        let cid = ids(nc);
        for (f, s) in fast.iter().zip(&slow) {
            for (a, b) in f.iter().zip(s) {
                max_diff = max_diff.max((a - b).abs());
            }
            mismatched += usize::from(rank_indices(f, &cid) != rank_indices(s, &cid));
        }
    }

    // Signed, scaled basis vectors: every vector's neighborhood has the same cosines, so
    // the hubness terms are constant.
    let d = 12;
    let signed_basis = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..2 * d)
            .map(|i| {
                let mut v = vec![0.0; d];
                v[i % d] = if i < d { 1.0 } else { -1.0 } * rng.gen_range(0.5..3.0);
                v
            })
            .collect()
    };
    let q = signed_basis(&mut rng);
    let c = signed_basis(&mut rng);
    let cid = ids(c.len());
    let mut degenerate_ok = true;
    for k in [1, 5, 2 * d] {
        let csls = Scorer::new(&q, &c, Measure::Csls, k).map_err(|e| e.to_string())?;
        let cos = Scorer::new(&q, &c, Measure::Cosine, k).map_err(|e| e.to_string())?;
        for i in 0..q.len() {
            degenerate_ok &= rank_indices(&csls.scores(i), &cid) == rank_indices(&cos.scores(i), &cid);
        }
    }
    check(
        mismatched == 0 && max_diff <= 1e-12 && degenerate_ok,
        format!(
            "pools up to 2000×2000: {mismatched} ranking mismatches, max score diff {max_diff:.2e}; \
             constant-hubness instances match cosine order: {degenerate_ok}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (n_cand, n_q, d) = (200_000, 2000, 8);
    let cands = random_vectors(&mut rng, n_cand, d);
    let cid = ids(n_cand);
    let pool = CandidatePool::new("t", cid.clone(), cands).map_err(|e| e.to_string())?;
    // Query i is relevant to a random candidate; its vector is independent of it.
    let mut targets: Vec<usize> = (0..n_cand).collect();
    for i in 0..n_q {
        let j = rng.gen_range(i..n_cand);
        targets.swap(i, j);
    }
    let queries = QuerySet {
        language: "s".into(),
        ids: targets[..n_q].iter().map(|&j| cid[j].clone()).collect(),
        vectors: random_vectors(&mut rng, n_q, d),
    };
    let ks = [1, 5, 10];
    let p = evaluate(&queries, &pool, Measure::Cosine, 10, &ks).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let expected = k as f64 / n_cand as f64;
        let se = (expected * (1.0 - expected) / n_q as f64).sqrt();
        ok &= (p[i] - expected).abs() <= 3.0 * se;
        parts.push(format!(
            "P@{k} {:.4}% (expected {:.4}%, 3 SE {:.4}%)",
            100.0 * p[i],
            100.0 * expected,
            300.0 * se
        ));
    }
    check(
        ok,
        format!("{n_q} queries vs {n_cand} candidates: {}", parts.join(", ")),
    )
}

fn end_to_end_bytes() -> Result<RunBytes, String> {
    let corpus = generate(&SyntheticConfig {
        n_words: 800,
        doc_len: 80..140,
        ..SyntheticConfig::bilingual(300, 3)
    })
    .map_err(|e| e.to_string())?;
    let pre = PreprocessConfig {
        min_unique: 20,
        ..PreprocessConfig::default()
    };
    let docs = preprocess(&corpus.docs, &pre);
    let split = make_splits(
        &docs,
        &SplitParams {
            pairs: vec![("xa".into(), "xb".into())],
            n_queries: 30,
            n_valid: 20,
            n_candidates: 200,
            mode: SplitMode::Joint,
            seed: 5,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut split_bytes = Vec::new();
    split.write(&mut split_bytes).map_err(|e| e.to_string())?;
    let scope = &model_scopes(&split)[0];
    let cfg = TrainConfig {
        pre,
        fit: FitConfig {
            lambda: 1.0,
            rank: 16,
            tol: SolverTolerances::default(),
            seed: 9,
        },
        keep_classifier: true,
    };
    let trained = train_model(&docs, &split, scope, &cfg).map_err(|e| e.to_string())?;
    let mut model_bytes = Vec::new();
    write_model(&trained.model, &mut model_bytes).map_err(|e| e.to_string())?;
    let report = evaluate_pairs(
        &trained.model,
        &docs,
        &split,
        &scope.eval_pairs(&split),
        QueryRole::Test,
        &EvalConfig {
            measures: vec![Measure::Cosine, Measure::Csls],
            ks: vec![1, 5, 10],
            k_nn: 10,
        },
    )
    .map_err(|e| e.to_string())?;
    let mut report_bytes = Vec::new();
    report.write_tsv(&mut report_bytes).map_err(|e| e.to_string())?;
    Ok((split_bytes, model_bytes, report_bytes))
}

fn criterion_8() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let first = pool.install(end_to_end_bytes)?;
    let second = pool.install(end_to_end_bytes)?;
    check(
        first == second,
        format!(
            "two single-threaded runs: split {} B, model {} B, report {} B, identical: {}",
            first.0.len(),
            first.1.len(),
            first.2.len(),
            first == second
        ),
    )
}

fn main() {
    let cases = oracle_cases();
    let criteria: Vec<Criterion> = vec![
        ("1 dense-oracle equivalence", Box::new(|| criterion_1(&cases))),
        ("2 operator identities", Box::new(criterion_2)),
        ("3 factorization contracts", Box::new(|| criterion_3(&cases))),
        ("4 synthetic bilingual retrieval", Box::new(criterion_4)),
        ("5 transitive training", Box::new(criterion_5)),
        ("6 CSLS correctness", Box::new(criterion_6)),
        ("7 random-ranking sanity", Box::new(criterion_7)),
        ("8 reproducibility", Box::new(criterion_8)),
    ];
    let mut results = BTreeMap::new();
    for (name, run) in &criteria {
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match &outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => println!("FAIL criterion {name}: {detail}"),
        }
        results.insert(*name, outcome.is_ok());
    }
    let failed = results.values().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
