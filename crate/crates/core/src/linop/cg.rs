use serde::{Deserialize, Serialize};

use super::csr::{axpy, dot, norm2};
use crate::error::{Error, Result};

/// Stopping rules for the conjugate-gradient and eigenvalue iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTolerances {
    /// Relative residual `‖Ax − b‖ / ‖b‖` at which CG stops.
    pub cg_eps: f64,
    pub cg_max_iter: usize,
    /// Ritz residual threshold, relative to each Ritz value.
    pub eig_eps: f64,
    /// Lanczos steps allowed beyond the requested rank.
    pub eig_max_iter: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            cg_eps: 0.01,
            cg_max_iter: 500,
            eig_eps: 0.1,
            eig_max_iter: 250,
        }
    }
}

impl SolverTolerances {
    /// Tight settings used when iterative results must match a direct solve.
    pub fn tight() -> Self {
        Self {
            cg_eps: 1e-13,
            cg_max_iter: 5000,
            eig_eps: 1e-10,
            eig_max_iter: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.cg_eps > 0.0
            && self.eig_eps > 0.0
            && self.cg_max_iter > 0
            && self.eig_max_iter > 0
            && self.cg_eps.is_finite()
            && self.eig_eps.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "solver tolerances must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    /// The iteration cap was hit before the residual reached `cg_eps`.
    pub truncated: bool,
}

/// Conjugate gradient for a symmetric positive definite operator given as a callback.
///
/// Starts from zero. When the iteration cap is reached, the iterate with the smallest
/// recurrence residual is returned and `truncated` is set.
pub fn conjugate_gradient<F>(apply: F, rhs: &[f64], tol: &SolverTolerances) -> Result<CgSolution>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("non-finite right-hand side".into()));
    }
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            truncated: false,
        });
    }

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut best_x = x.clone();
    let mut best_res = 1.0;

    for it in 1..=tol.cg_max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !rr.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite value in CG at iteration {it}"
            )));
        }
        if pap <= 0.0 {
            return Err(Error::NumericalBreakdown(format!(
                "operator not positive definite (pᵀAp = {pap:e}) at iteration {it}"
            )));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        let rel = rr_next.sqrt() / rhs_norm;
        if !rel.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite residual in CG at iteration {it}"
            )));
        }
        if rel <= tol.cg_eps {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rel,
                truncated: false,
            });
        }
        if rel < best_res {
            best_res = rel;
            best_x.copy_from_slice(&x);
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }

    Ok(CgSolution {
        x: best_x,
        iterations: tol.cg_max_iter,
        relative_residual: best_res,
        truncated: true,
    })
}
