use std::sync::Arc;

use rayon::prelude::*;

use super::csr::{check_len, dot, CsrMatrix};
use crate::error::{Error, Result};

/// Matrix-free `X̂ᵀX̂ + λI`, where `X̂` is `X` with column means subtracted.
///
/// Applied as `Xᵀ(Xu) + λu − nμ(μᵀu)`; `X̂` is never formed.
#[derive(Debug, Clone)]
pub struct CenteredGramOperator {
    x: Arc<CsrMatrix>,
    lambda: f64,
    mu: Vec<f64>,
    n: usize,
}

impl CenteredGramOperator {
    pub fn new(x: impl Into<Arc<CsrMatrix>>, lambda: f64) -> Result<Self> {
        let x = x.into();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "regularization must be positive, got {lambda}"
            )));
        }
        let n = x.n_rows();
        if n == 0 {
            return Err(Error::InvalidArgument("empty training matrix".into()));
        }
        let mu = x.column_sums().into_iter().map(|s| s / n as f64).collect();
        Ok(Self { x, lambda, mu, n })
    }

    pub fn x(&self) -> &CsrMatrix {
        &self.x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.x.n_cols()
    }

    /// `(X̂ᵀX̂ + λI)u`.
    pub fn centered_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        Ok(self.apply_unchecked(u))
    }

    pub(crate) fn apply_unchecked(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.gram_plus_ridge(u);
        let scale = self.n as f64 * dot(&self.mu, u);
        for (o, m) in out.iter_mut().zip(&self.mu) {
            *o -= scale * m;
        }
        out
    }

    /// `(XᵀX + λI)u`, the uncentered part.
    pub(crate) fn gram_plus_ridge(&self, u: &[f64]) -> Vec<f64> {
        let xu = par_matvec(&self.x, u);
        let mut out = self.x.matvec_t(&xu).expect("row count matches");
        for (o, ui) in out.iter_mut().zip(u) {
            *o += self.lambda * ui;
        }
        out
    }
}

/// Row-parallel `A·u`. Each output entry is computed by one thread, so the
/// result is identical to the sequential product.
pub(crate) fn par_matvec(a: &CsrMatrix, u: &[f64]) -> Vec<f64> {
    (0..a.n_rows())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let (cols, vals) = a.row(i);
            cols.iter().zip(vals).map(|(&c, &v)| v * u[c]).sum()
        })
        .collect()
}
