use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainSet;
use crate::corpus::SparseVector;
use crate::error::{Error, Result};
use crate::linop::{dot, eigensolve_topk, BlockSolver, CenteredGramOperator, SolverTolerances};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub rank: usize,
    pub tol: SolverTolerances,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            rank: 300,
            tol: SolverTolerances::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, n_classes: usize, p: usize) -> Result<()> {
        self.tol.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.rank == 0 || self.rank > n_classes.min(p) {
            return Err(Error::InvalidArgument(format!(
                "rank {} must lie in 1..={} (min of {n_classes} classes and {p} features)",
                self.rank,
                n_classes.min(p)
            )));
        }
        Ok(())
    }
}

/// Solver diagnostics worth logging: convergence of the eigensolver and the CG solves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub lanczos_steps: usize,
    pub eig_truncated: bool,
    pub ritz_residuals: Vec<f64>,
    pub cg_solves: usize,
    pub cg_iterations: usize,
    pub cg_truncated: usize,
    pub degenerate_centering: bool,
}

/// Factored rank-r classifier `W = H·diag(sigma)·Phi` with offsets `b`.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// `K × r`, orthonormal columns.
    pub h: DMatrix<f64>,
    /// `r × p`, orthonormal rows.
    pub phi: DMatrix<f64>,
    /// Singular values of `W`, nonincreasing.
    pub sigma: Vec<f64>,
    pub b: Vec<f64>,
    /// Top eigenvalues of `ŶᵀX̂(X̂ᵀX̂ + λI)⁻¹X̂ᵀŶ`.
    pub eigenvalues: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Dense `W`; for tests and small problems.
    pub fn w(&self) -> DMatrix<f64> {
        let mut hs = self.h.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            hs.column_mut(j).scale_mut(*s);
        }
        hs * &self.phi
    }

    /// `Phi·x`.
    pub fn embed(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.phi.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.phi.ncols(),
                got: x.dim(),
            });
        }
        let mut out = vec![0.0; self.rank()];
        for &(c, v) in x.entries() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.phi[(i, c)] * v;
            }
        }
        Ok(out)
    }

    /// Class scores `h_kᵀ·diag(sigma)·(Phi·x) + b_k`.
    pub fn scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let z: Vec<f64> = self.embed(x)?.iter().zip(&self.sigma).map(|(e, s)| e * s).collect();
        Ok((0..self.h.nrows())
            .map(|k| {
                let hk: Vec<f64> = self.h.row(k).iter().copied().collect();
                dot(&hk, &z) + self.b[k]
            })
            .collect())
    }
}

/// Winner-takes-all class for `x`; ties go to the smallest index.
pub fn classify(x: &SparseVector, fit: &FitResult) -> Result<usize> {
    let scores = fit.scores(x)?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(best)
}

/// `b = ȳ − W·μ`, computed through the factors.
pub fn compute_offsets(h: &DMatrix<f64>, sigma: &[f64], phi: &DMatrix<f64>, train: &TrainSet) -> Vec<f64> {
    let mu = nalgebra::DVector::from_column_slice(train.mu());
    let mut z = phi * mu;
    for (zi, s) in z.iter_mut().zip(sigma) {
        *zi *= s;
    }
    let wmu = h * z;
    train.class_means().iter().zip(wmu.iter()).map(|(y, w)| y - w).collect()
}

/// Matrix-free `ŶᵀX̂(X̂ᵀX̂ + λI)⁻¹X̂ᵀŶ` on `R^K`, backed by a block solver.
pub struct ClassifierGram<'a> {
    train: &'a TrainSet,
    solver: BlockSolver<'a>,
}

impl<'a> ClassifierGram<'a> {
    pub fn new(
        train: &'a TrainSet,
        op: &'a CenteredGramOperator,
        blocks: &[Range<usize>],
        tol: &SolverTolerances,
    ) -> Result<Self> {
        Ok(Self {
            train,
            solver: BlockSolver::new(op, blocks, tol)?,
        })
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let w = self.train.centered_xty(u)?;
        let x = self.solver.solve(&w)?;
        self.train.centered_ytx(&x)
    }

    pub fn solver(&self) -> &BlockSolver<'a> {
        &self.solver
    }
}

/// Fits the rank-r ridge classifier and factors it into `H`, `sigma`, `Phi`, `b`.
///
/// `blocks` are the per-language column ranges; pass a single `0..p` range when the
/// feature space has no block structure.
pub fn fit(train: &TrainSet, blocks: &[Range<usize>], cfg: &FitConfig) -> Result<FitResult> {
    let k = train.n_classes();
    let p = train.p();
    let r = cfg.rank;
    cfg.validate(k, p)?;

    let op = CenteredGramOperator::new(train.shared_x(), cfg.lambda)?;
    let gram = ClassifierGram::new(train, &op, blocks, &cfg.tol)?;

    let eig = eigensolve_topk(|u| gram.apply(u), k, r, &cfg.tol, cfg.seed)?;
    log::info!(
        "eigensolver: {} Lanczos steps, truncated={}, top eigenvalue {:.6e}",
        eig.steps,
        eig.truncated,
        eig.values.first().copied().unwrap_or(0.0)
    );

    // Rows of Φ* = PᵀŶᵀX̂(X̂ᵀX̂ + λI)⁻¹, one solve each, in eigenvalue order.
    let rows: Vec<Result<Vec<f64>>> = eig
        .vectors
        .par_iter()
        .map(|pk| gram.solver().solve(&train.centered_xty(pk)?))
        .collect();
    let mut phi_star = DMatrix::<f64>::zeros(r, p);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            phi_star[(i, j)] = v;
        }
    }

    let gram_rr = &phi_star * phi_star.transpose();
    let se = SymmetricEigen::new(gram_rr);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let lambdas: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let top = lambdas[0];
    let achievable = lambdas.iter().filter(|&&l| l > 1e-12 * top && top > 0.0).count();
    if achievable < r {
        return Err(Error::RankDeficient {
            requested: r,
            achievable,
        });
    }
    let mut q = DMatrix::<f64>::zeros(r, r);
    for (j, &i) in order.iter().enumerate() {
        q.set_column(j, &se.eigenvectors.column(i));
    }

    let mut p_r = DMatrix::<f64>::zeros(k, r);
    for (j, v) in eig.vectors.iter().enumerate() {
        p_r.set_column(j, &nalgebra::DVector::from_column_slice(v));
    }
    let mut h = p_r * &q;
    let mut phi = q.transpose() * phi_star;
    let sigma: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    for (i, s) in sigma.iter().enumerate() {
        phi.row_mut(i).scale_mut(1.0 / s);
    }
    canonicalize_signs(&mut h, &mut phi);

    let b = compute_offsets(&h, &sigma, &phi, train);
    let stats = gram.solver().stats();
    let diagnostics = FitDiagnostics {
        lanczos_steps: eig.steps,
        eig_truncated: eig.truncated,
        ritz_residuals: eig.residuals.clone(),
        cg_solves: stats.solves,
        cg_iterations: stats.iterations,
        cg_truncated: stats.truncated,
        degenerate_centering: gram.solver().is_degenerate(),
    };
    log::info!(
        "CG: {} solves, {} iterations, {} truncated",
        stats.solves,
        stats.iterations,
        stats.truncated
    );
    Ok(FitResult {
        h,
        phi,
        sigma,
        b,
        eigenvalues: eig.values,
        diagnostics,
    })
}

/// Flips each (column of `h`, row of `phi`) pair so the row's largest-magnitude entry
/// is positive. `W` is unchanged.
pub(crate) fn canonicalize_signs(h: &mut DMatrix<f64>, phi: &mut DMatrix<f64>) {
    for i in 0..phi.nrows() {
        let pivot = phi
            .row(i)
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            phi.row_mut(i).neg_mut();
            h.column_mut(i).neg_mut();
        }
    }
}
