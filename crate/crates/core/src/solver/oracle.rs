//! Dense reference solver for small problems. Shares no code path with [`super::fit`]
//! beyond the offset formula: it centers explicitly, factors `X̂ᵀX̂ + λI` by Cholesky
//! and eigendecomposes dense Gram matrices.
//!
//! Singular vectors are obtained from `M·Mᵀ` rather than `nalgebra::SVD`, which can
//! return an inaccurate factorization for rank-deficient wide matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use super::fit::{canonicalize_signs, compute_offsets, FitConfig, FitDiagnostics, FitResult};
use super::TrainSet;
use crate::error::{Error, Result};

/// Largest `n·p` the dense oracle accepts.
pub const DENSE_LIMIT: usize = 1_000_000;

/// Dense `X`, `X̂` and `Ŷ`.
pub struct DenseProblem {
    pub x: DMatrix<f64>,
    pub x_centered: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub y_centered: DMatrix<f64>,
}

impl DenseProblem {
    pub fn new(train: &TrainSet) -> Result<Self> {
        let (n, p, k) = (train.n(), train.p(), train.n_classes());
        if n * p > DENSE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "dense oracle limited to n·p ≤ {DENSE_LIMIT}, got {}",
                n * p
            )));
        }
        let x = DMatrix::from_row_slice(n, p, &train.x().to_dense());
        let mut y = DMatrix::zeros(n, k);
        for (i, &c) in train.labels().iter().enumerate() {
            y[(i, c)] = 1.0;
        }
        Ok(Self {
            x_centered: center_columns(&x),
            y_centered: center_columns(&y),
            x,
            y,
        })
    }

    /// `X̂ᵀX̂ + λI`.
    pub fn ridge_gram(&self, lambda: f64) -> DMatrix<f64> {
        let p = self.x.ncols();
        self.x_centered.transpose() * &self.x_centered + DMatrix::identity(p, p) * lambda
    }

    /// `ŶᵀX̂(L⁻¹)ᵀ` with `LLᵀ = X̂ᵀX̂ + λI`.
    pub fn whitened_cross(&self, lambda: f64) -> Result<DMatrix<f64>> {
        let chol = self
            .ridge_gram(lambda)
            .cholesky()
            .ok_or_else(|| Error::NumericalBreakdown("Cholesky of ridge Gram failed".into()))?;
        let xty = self.x_centered.transpose() * &self.y_centered; // p × K
        let l_inv_xty = chol
            .l()
            .solve_lower_triangular(&xty)
            .ok_or_else(|| Error::NumericalBreakdown("triangular solve failed".into()))?;
        Ok(l_inv_xty.transpose())
    }

    /// All eigenvalues of `ŶᵀX̂(X̂ᵀX̂ + λI)⁻¹X̂ᵀŶ`, nonincreasing.
    pub fn classifier_gram_spectrum(&self, lambda: f64) -> Result<Vec<f64>> {
        let m = self.whitened_cross(lambda)?;
        Ok(sorted_eigen(&m * m.transpose()).1)
    }

    /// `½‖Y − XWᵀ − 1bᵀ‖²_F + (λ/2)‖W‖²_F`.
    pub fn objective(&self, w: &DMatrix<f64>, b: &[f64], lambda: f64) -> f64 {
        let mut resid = &self.y - &self.x * w.transpose();
        for mut row in resid.row_iter_mut() {
            for (v, bk) in row.iter_mut().zip(b) {
                *v -= bk;
            }
        }
        0.5 * resid.norm_squared() + 0.5 * lambda * w.norm_squared()
    }
}

fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = m.row_mean();
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= &mean;
    }
    out
}

/// Eigenpairs of a symmetric matrix, values nonincreasing.
fn sorted_eigen(m: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let se = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| se.eigenvectors.column(i)).collect::<Vec<_>>());
    (vectors, values)
}

/// Top-r left singular vectors, singular values and right singular vectors of `m`,
/// from the eigendecomposition of `m·mᵀ`.
fn top_singular(m: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (u, vals) = sorted_eigen(m * m.transpose());
    let u = u.columns(0, r).into_owned();
    let s: Vec<f64> = vals[..r].iter().map(|v| v.max(0.0).sqrt()).collect();
    if s.iter().any(|&v| v <= 1e-12 * s[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient {
            requested: r,
            achievable: s.iter().filter(|&&v| v > 1e-12 * s[0]).count(),
        });
    }
    let mut vt = u.transpose() * m;
    for (i, sv) in s.iter().enumerate() {
        vt.row_mut(i).scale_mut(1.0 / sv);
    }
    Ok((u, s, vt))
}

/// Dense rank-r solution: with `M = ŶᵀX̂(L⁻¹)ᵀ` and `P_r` the top-r eigenvectors of
/// `M·Mᵀ`, `W = P_r P_rᵀ M L⁻¹`; the SVD of `W` then gives `H`, `sigma`, `Phi`.
pub fn direct_fit(train: &TrainSet, cfg: &FitConfig) -> Result<FitResult> {
    let (k, p, r) = (train.n_classes(), train.p(), cfg.rank);
    cfg.validate(k, p)?;
    let dense = DenseProblem::new(train)?;
    let chol = dense
        .ridge_gram(cfg.lambda)
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown("Cholesky of ridge Gram failed".into()))?;
    let m = dense.whitened_cross(cfg.lambda)?;
    let (pm, eigenvalues) = sorted_eigen(&m * m.transpose());
    let pr = pm.columns(0, r);
    let z = pr * (pr.transpose() * &m);
    // W = Z L⁻¹, i.e. Wᵀ = L⁻ᵀ Zᵀ.
    let wt = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z.transpose())
        .ok_or_else(|| Error::NumericalBreakdown("triangular solve failed".into()))?;
    let w = wt.transpose();

    let (mut h, sigma, mut phi) = top_singular(&w, r)?;
    canonicalize_signs(&mut h, &mut phi);
    let b = compute_offsets(&h, &sigma, &phi, train);
    Ok(FitResult {
        h,
        phi,
        sigma,
        b,
        eigenvalues: eigenvalues[..r].to_vec(),
        diagnostics: FitDiagnostics::default(),
    })
}

/// Unconstrained ridge solution `W = ŶᵀX̂(X̂ᵀX̂ + λI)⁻¹`.
pub fn ridge_solution(train: &TrainSet, lambda: f64) -> Result<DMatrix<f64>> {
    let dense = DenseProblem::new(train)?;
    let chol = dense
        .ridge_gram(lambda)
        .cholesky()
        .ok_or_else(|| Error::NumericalBreakdown("Cholesky of ridge Gram failed".into()))?;
    let xty = dense.x_centered.transpose() * &dense.y_centered;
    Ok(chol.solve(&xty).transpose())
}

/// Largest principal angle (radians) between the row spaces of two matrices with
/// orthonormal rows.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // sin of the largest angle is the norm of the part of A's rows outside B's row space.
    let resid = a - (a * b.transpose()) * b;
    let sin2 = SymmetricEigen::new(&resid * resid.transpose()).eigenvalues.amax();
    sin2.max(0.0).sqrt().min(1.0).asin()
}

/// Max-abs deviation of `A·Aᵀ` from the identity.
pub fn orthonormal_rows_error(a: &DMatrix<f64>) -> f64 {
    let g = a * a.transpose();
    let n = g.nrows();
    (g - DMatrix::<f64>::identity(n, n)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::{CsrMatrix, SolverTolerances};

    fn random_train(seed: u64, n: usize, p: usize, k: usize) -> TrainSet {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p)
            .map(|_| {
                if rng.gen::<f64>() < 0.3 {
                    rng.gen_range(0.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let labels = (0..n).map(|i| i % k).collect();
        TrainSet::new(CsrMatrix::from_dense(n, p, &data).unwrap(), labels, k).unwrap()
    }

    #[test]
    fn two_point_matches_closed_form() {
        let t = TrainSet::new(CsrMatrix::identity(2), vec![0, 1], 2).unwrap();
        let cfg = FitConfig {
            lambda: 1.0,
            rank: 1,
            tol: SolverTolerances::tight(),
            seed: 0,
        };
        let f = direct_fit(&t, &cfg).unwrap();
        assert!((f.eigenvalues[0] - 0.5).abs() < 1e-12);
        assert!((f.phi[(0, 0)] + f.phi[(0, 1)]).abs() < 1e-12);
    }

    #[test]
    fn full_rank_equals_ridge() {
        // p < K so min(K, p) = p and the rank constraint is vacuous.
        let t = random_train(4, 40, 5, 8);
        let cfg = FitConfig {
            lambda: 0.5,
            rank: 5,
            tol: SolverTolerances::tight(),
            seed: 0,
        };
        let w = direct_fit(&t, &cfg).unwrap().w();
        let ridge = ridge_solution(&t, 0.5).unwrap();
        assert!((w - &ridge).amax() <= 1e-8 * ridge.amax().max(1.0));
    }

    #[test]
    fn regularization_shrinks_w() {
        let t = random_train(5, 30, 8, 6);
        let norms: Vec<f64> = [1.0, 1e2, 1e6]
            .iter()
            .map(|&lambda| {
                let cfg = FitConfig {
                    lambda,
                    rank: 3,
                    tol: SolverTolerances::tight(),
                    seed: 0,
                };
                direct_fit(&t, &cfg).unwrap().w().norm()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2]);
        assert!(norms[2] < 1e-4);
    }

    #[test]
    fn guard_rejects_large_problems() {
        let t = TrainSet::new(CsrMatrix::zeros(1001, 1000), vec![0; 1001], 1).unwrap();
        let cfg = FitConfig {
            rank: 1,
            ..FitConfig::default()
        };
        assert!(direct_fit(&t, &cfg).is_err());
    }
}
