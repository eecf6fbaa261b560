use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linop::CsrMatrix;

/// Training matrix `X` (one row per document) with class labels.
#[derive(Debug, Clone)]
pub struct TrainSet {
    x: Arc<CsrMatrix>,
    labels: Vec<usize>,
    n_classes: usize,
    mu: Vec<f64>,
    class_means: Vec<f64>,
}

impl TrainSet {
    pub fn new(x: CsrMatrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n = x.n_rows();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two training rows, got {n}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&k| k >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let x = Arc::new(x);
        let mu = x.column_sums().into_iter().map(|s| s / n as f64).collect();
        let mut class_means = vec![0.0; n_classes];
        for &k in &labels {
            class_means[k] += 1.0;
        }
        class_means.iter_mut().for_each(|c| *c /= n as f64);
        Ok(Self {
            x,
            labels,
            n_classes,
            mu,
            class_means,
        })
    }

    pub fn x(&self) -> &CsrMatrix {
        &self.x
    }

    pub fn shared_x(&self) -> Arc<CsrMatrix> {
        Arc::clone(&self.x)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn p(&self) -> usize {
        self.x.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `(1/n)·Yᵀ1`, the fraction of rows in each class.
    pub fn class_means(&self) -> &[f64] {
        &self.class_means
    }

    /// `Y·u`: picks `u[label]` per row.
    pub(crate) fn y_mul(&self, u: &[f64]) -> Vec<f64> {
        self.labels.iter().map(|&k| u[k]).collect()
    }

    /// `Yᵀ·z`: sums row values per class.
    pub(crate) fn yt_mul(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_classes];
        for (&k, &zi) in self.labels.iter().zip(z) {
            out[k] += zi;
        }
        out
    }

    /// `X̂ᵀŶu = Xᵀ(Yu) − nμ(ȳᵀu)`.
    pub fn centered_xty(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                expected: self.n_classes,
                got: u.len(),
            });
        }
        let mut out = self.x.matvec_t(&self.y_mul(u))?;
        let scale = self.n() as f64 * crate::linop::dot(&self.class_means, u);
        for (o, m) in out.iter_mut().zip(&self.mu) {
            *o -= scale * m;
        }
        Ok(out)
    }

    /// `ŶᵀX̂v = Yᵀ(Xv) − nȳ(μᵀv)`.
    pub fn centered_ytx(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.yt_mul(&self.x.matvec(v)?);
        let scale = self.n() as f64 * crate::linop::dot(&self.mu, v);
        for (o, c) in out.iter_mut().zip(&self.class_means) {
            *o -= scale * c;
        }
        Ok(out)
    }
}
