//! Top-r eigenpairs of a symmetric operator by Lanczos with full reorthogonalization.
//!
//! The operator is only touched through matrix-vector products. Every new Krylov vector
//! is orthogonalized twice against the whole basis, so the basis stays orthonormal to
//! working precision and Ritz vectors inherit that. When the Krylov space becomes
//! invariant before `r` pairs are found (repeated eigenvalues, identity-like operators)
//! the iteration restarts from a fresh random vector orthogonal to the current basis.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cg::SolverTolerances;
use super::csr::{axpy, dot, norm2};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Ritz vectors, one `Vec` of length `K` per eigenpair.
    pub vectors: Vec<Vec<f64>>,
    /// Ritz values, nonincreasing.
    pub values: Vec<f64>,
    /// `‖A pᵢ − θᵢ pᵢ‖` estimates from the Lanczos recurrence.
    pub residuals: Vec<f64>,
    /// Number of operator applications.
    pub steps: usize,
    /// The step cap was hit before every pair met the residual threshold.
    pub truncated: bool,
}

/// Computes the `r` largest eigenpairs of the symmetric PSD operator `apply` on `R^dim`.
///
/// At most `min(dim, r + tol.eig_max_iter)` Lanczos steps are taken. A pair counts as
/// converged when its Ritz residual is at most `tol.eig_eps` times its own Ritz value
/// (floored at machine precision relative to the largest one).
pub fn eigensolve_topk<F>(
    mut apply: F,
    dim: usize,
    r: usize,
    tol: &SolverTolerances,
    seed: u64,
) -> Result<EigenDecomposition>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if r == 0 || r > dim {
        return Err(Error::InvalidArgument(format!(
            "requested {r} eigenpairs of a {dim}-dimensional operator"
        )));
    }
    tol.validate()?;
    let max_steps = dim.min(r.saturating_add(tol.eig_max_iter));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_steps);
    // betas[j] couples basis[j] and basis[j + 1]; zero after a restart.
    let mut betas: Vec<f64> = Vec::with_capacity(max_steps);

    let start = fresh_direction(&mut rng, &basis, dim)
        .ok_or_else(|| Error::NumericalBreakdown("could not draw a start vector".into()))?;
    basis.push(start);

    let mut scale = 0.0f64;
    loop {
        let j = basis.len() - 1;
        let mut w = apply(&basis[j])?;
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBreakdown(format!(
                "operator returned non-finite values at Lanczos step {}",
                j + 1
            )));
        }
        let alpha = dot(&basis[j], &w);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        alphas.push(alpha);
        let mut beta = norm2(&w);
        scale = scale.max(alpha.abs()).max(beta);

        let steps = basis.len();
        let done_dim = steps == dim;
        let done_cap = steps >= max_steps;
        let breakdown = beta <= 1e-12 * scale.max(f64::MIN_POSITIVE);
        if breakdown {
            beta = 0.0;
        }

        // An invariant subspace may hide eigenvalues the start vector never touched, so a
        // breakdown restarts rather than declaring convergence.
        let may_stop = done_dim || done_cap || (!breakdown && should_check(steps));
        if steps >= r && may_stop {
            let ritz = ritz_pairs(&alphas, &betas, beta, r);
            let theta_max = ritz.values.first().copied().unwrap_or(0.0).abs();
            let floor = f64::EPSILON * theta_max * dim as f64;
            let converged = theta_max == 0.0
                || ritz
                    .residuals
                    .iter()
                    .zip(&ritz.values)
                    .all(|(&res, &theta)| res <= tol.eig_eps * theta.abs().max(floor));
            if converged || done_dim || done_cap {
                let truncated = !converged && !done_dim;
                return Ok(assemble(&basis, ritz, steps, truncated));
            }
        }

        if breakdown {
            betas.push(0.0);
            match fresh_direction(&mut rng, &basis, dim) {
                Some(v) => basis.push(v),
                None if steps < r => {
                    return Err(Error::NumericalBreakdown(format!(
                        "Krylov space exhausted after {steps} steps, {r} pairs requested"
                    )));
                }
                None => {
                    let ritz = ritz_pairs(&alphas, &betas[..betas.len() - 1], 0.0, r);
                    return Ok(assemble(&basis, ritz, steps, false));
                }
            }
        } else {
            betas.push(beta);
            w.iter_mut().for_each(|v| *v /= beta);
            basis.push(w);
        }
    }
}

fn should_check(steps: usize) -> bool {
    steps <= 100 || steps.is_multiple_of((steps / 20).max(1))
}

/// A random unit vector orthogonal to `basis`, or `None` if the basis already spans.
fn fresh_direction(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(b, &v);
                axpy(-c, b, &mut v);
            }
        }
        let n = norm2(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Some(v);
        }
    }
    None
}

struct Ritz {
    values: Vec<f64>,
    /// Eigenvectors of the tridiagonal matrix, each of length `m`.
    coords: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

fn ritz_pairs(alphas: &[f64], betas: &[f64], last_beta: f64, r: usize) -> Ritz {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let take = r.min(m);
    let mut values = Vec::with_capacity(take);
    let mut coords = Vec::with_capacity(take);
    let mut residuals = Vec::with_capacity(take);
    for &idx in order.iter().take(take) {
        let s: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        values.push(eig.eigenvalues[idx]);
        residuals.push((last_beta * s[m - 1]).abs());
        coords.push(s);
    }
    Ritz {
        values,
        coords,
        residuals,
    }
}

fn assemble(basis: &[Vec<f64>], ritz: Ritz, steps: usize, truncated: bool) -> EigenDecomposition {
    let dim = basis[0].len();
    let vectors = ritz
        .coords
        .iter()
        .map(|s| {
            let mut v = vec![0.0; dim];
            for (b, &c) in basis.iter().zip(s) {
                axpy(c, b, &mut v);
            }
            // Sign convention: largest-magnitude entry positive.
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    EigenDecomposition {
        vectors,
        values: ritz.values,
        residuals: ritz.residuals,
        steps,
        truncated,
    }
}
