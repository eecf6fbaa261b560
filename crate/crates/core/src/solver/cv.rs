use crate::error::{Error, Result};

/// Default regularization grid.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best_lambda: f64,
    /// `(λ, validation P@1)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Evaluates `score(λ)` (validation P@1 of a model fitted with λ) over the grid and
/// returns the best λ. Ties go to the smaller λ.
pub fn cross_validate_lambda<F>(grid: &[f64], mut score: F) -> Result<CvOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let s = score(lambda)?;
        log::info!("lambda {lambda:e}: validation P@1 {s:.4}");
        scores.push((lambda, s));
    }
    let (best_lambda, _) = scores
        .iter()
        .copied()
        .reduce(|best, cur| {
            if cur.1 > best.1 || (cur.1 == best.1 && cur.0 < best.0) {
                cur
            } else {
                best
            }
        })
        .expect("grid is nonempty");
    Ok(CvOutcome { best_lambda, scores })
}
