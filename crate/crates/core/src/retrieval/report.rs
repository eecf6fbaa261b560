use std::io::{BufRead, Write};

use super::Measure;
use crate::error::{Error, Result};

const HEADER: &str = "query_lang\ttarget_lang\tmeasure\tk\tprecision\tn_queries\tn_candidates";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub query_lang: String,
    pub target_lang: String,
    pub measure: Measure,
    pub k: usize,
    pub precision: f64,
    pub n_queries: usize,
    pub n_candidates: usize,
}

/// P@k results, one row per (direction, measure, k).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Appends one row per `k` for a single direction and measure.
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        query_lang: &str,
        target_lang: &str,
        measure: Measure,
        ks: &[usize],
        precisions: &[f64],
        n_queries: usize,
        n_candidates: usize,
    ) {
        for (&k, &precision) in ks.iter().zip(precisions) {
            self.rows.push(EvalRow {
                query_lang: query_lang.to_string(),
                target_lang: target_lang.to_string(),
                measure,
                k,
                precision,
                n_queries,
                n_candidates,
            });
        }
    }

    pub fn get(&self, query_lang: &str, target_lang: &str, measure: Measure, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.query_lang == query_lang && r.target_lang == target_lang && r.measure == measure && r.k == k)
            .map(|r| r.precision)
    }

    /// Checks that precision never decreases with `k` within a direction and measure.
    pub fn is_monotone(&self) -> bool {
        self.rows.iter().all(|a| {
            self.rows.iter().all(|b| {
                a.query_lang != b.query_lang
                    || a.target_lang != b.target_lang
                    || a.measure != b.measure
                    || a.k > b.k
                    || a.precision <= b.precision
            })
        })
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.query_lang, r.target_lang, r.measure, r.k, r.precision, r.n_queries, r.n_candidates
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let bad = |line: usize, message: String| Error::CorpusFormat { line, message };
        match lines.next() {
            Some(Ok(h)) if h == HEADER => {}
            _ => return Err(bad(1, "missing report header".into())),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| bad(lineno, e.to_string()))?;
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                return Err(bad(lineno, format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| bad(lineno, e.to_string()));
            rows.push(EvalRow {
                query_lang: f[0].to_string(),
                target_lang: f[1].to_string(),
                measure: f[2].parse()?,
                k: num(f[3])?,
                precision: f[4].parse().map_err(|_| bad(lineno, "invalid precision".into()))?,
                n_queries: num(f[5])?,
                n_candidates: num(f[6])?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip_and_lookup() {
        let mut r = EvalReport::default();
        r.push("da", "vi", Measure::Cosine, &[1, 5, 10], &[0.25, 0.5, 0.75], 4, 100);
        r.push("vi", "da", Measure::Csls, &[1, 5, 10], &[0.5, 0.5, 1.0], 4, 100);
        let mut buf = Vec::new();
        r.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("query_lang\ttarget_lang\tmeasure\tk\tprecision\tn_queries\tn_candidates\n"));
        assert_eq!(text.lines().count(), 7);
        let back = EvalReport::read_tsv(&buf[..]).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get("vi", "da", Measure::Csls, 10), Some(1.0));
        assert!(back.is_monotone());
    }

    #[test]
    fn detects_non_monotone_rows() {
        let mut r = EvalReport::default();
        r.push("a", "b", Measure::Cosine, &[1, 5], &[0.6, 0.5], 2, 2);
        assert!(!r.is_monotone());
    }
}
