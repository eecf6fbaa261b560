use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::cg::{conjugate_gradient, CgSolution, SolverTolerances};
use super::csr::{check_len, dot, CsrMatrix};
use super::gram::{par_matvec, CenteredGramOperator};
use crate::error::{Error, Result};

/// Counters accumulated over every CG solve a [`BlockSolver`] performs.
#[derive(Debug, Default)]
pub struct SolveStats {
    solves: AtomicUsize,
    iterations: AtomicUsize,
    truncated: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStatsSnapshot {
    pub solves: usize,
    pub iterations: usize,
    pub truncated: usize,
}

impl SolveStats {
    fn record(&self, sol: &CgSolution) {
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.iterations.fetch_add(sol.iterations, Ordering::Relaxed);
        if sol.truncated {
            self.truncated.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> SolveStatsSnapshot {
        SolveStatsSnapshot {
            solves: self.solves.load(Ordering::Relaxed),
            iterations: self.iterations.load(Ordering::Relaxed),
            truncated: self.truncated.load(Ordering::Relaxed),
        }
    }
}

/// One language block of `B = XᵀX + λI`: the training rows that live in the block,
/// restricted to the block's columns.
#[derive(Debug, Clone)]
struct Block {
    cols: Range<usize>,
    x: CsrMatrix,
}

#[derive(Debug, Clone)]
enum Correction {
    /// `(X̂ᵀX̂ + λI)⁻¹ = B⁻¹ + coef·z·zᵀ` with `z = B⁻¹μ`.
    RankOne { z: Vec<f64>, coef: f64 },
    /// Centering term numerically degenerate; solve the centered system directly.
    Degenerate,
}

/// Solves `(X̂ᵀX̂ + λI)x = u` by exploiting that `XᵀX + λI` is block diagonal across
/// languages when each training row touches a single block. Centering enters as a
/// rank-one correction (Sherman–Morrison), so every solve reduces to independent
/// per-block CG runs.
#[derive(Debug)]
pub struct BlockSolver<'a> {
    op: &'a CenteredGramOperator,
    blocks: Vec<Block>,
    correction: Correction,
    tol: SolverTolerances,
    stats: SolveStats,
}

impl<'a> BlockSolver<'a> {
    /// `blocks` must tile `0..p` contiguously and in order.
    pub fn new(op: &'a CenteredGramOperator, blocks: &[Range<usize>], tol: &SolverTolerances) -> Result<Self> {
        tol.validate()?;
        let p = op.dim();
        let mut expected_start = 0;
        for b in blocks {
            if b.start != expected_start || b.end < b.start {
                return Err(Error::InvalidArgument(format!(
                    "blocks must tile the feature space contiguously; got {b:?} at offset {expected_start}"
                )));
            }
            expected_start = b.end;
        }
        if expected_start != p {
            return Err(Error::InvalidArgument(format!(
                "blocks cover {expected_start} columns, operator has {p}"
            )));
        }

        let x = op.x();
        let mut rows_per_block = vec![Vec::new(); blocks.len()];
        for i in 0..x.n_rows() {
            let (cols, _) = x.row(i);
            let (Some(&first), Some(&last)) = (cols.first(), cols.last()) else {
                continue;
            };
            let k = blocks.partition_point(|b| b.end <= first);
            if last >= blocks[k].end {
                return Err(Error::InvalidState(format!(
                    "training row {i} spans more than one feature block"
                )));
            }
            rows_per_block[k].push(i);
        }
        let blocks: Vec<Block> = blocks
            .iter()
            .zip(&rows_per_block)
            .map(|(range, rows)| Block {
                cols: range.clone(),
                x: x.submatrix(rows, range.start, range.len()),
            })
            .collect();

        let mut solver = Self {
            op,
            blocks,
            correction: Correction::Degenerate,
            tol: *tol,
            stats: SolveStats::default(),
        };

        // z = B⁻¹μ is reused by every solve, so it gets a tighter tolerance.
        let z_tol = SolverTolerances {
            cg_eps: tol.cg_eps.min(1e-10),
            cg_max_iter: tol.cg_max_iter.max(1000),
            ..*tol
        };
        let z = solver.solve_blocks(op.mu(), &z_tol)?;
        let n = op.n() as f64;
        let gap = 1.0 - n * dot(op.mu(), &z);
        if gap > 1e-12 {
            solver.correction = Correction::RankOne { z, coef: n / gap };
        } else {
            log::warn!("centering correction degenerate (1 - nμᵀB⁻¹μ = {gap:e}); using direct CG");
        }
        Ok(solver)
    }

    /// Single-block solver covering the whole feature space.
    pub fn single_block(op: &'a CenteredGramOperator, tol: &SolverTolerances) -> Result<Self> {
        let p = op.dim();
        #[allow(clippy::single_range_in_vec_init)]
        Self::new(op, &[0..p], tol)
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.correction, Correction::Degenerate)
    }

    pub fn operator(&self) -> &CenteredGramOperator {
        self.op
    }

    pub fn stats(&self) -> SolveStatsSnapshot {
        self.stats.snapshot()
    }

    /// `(X̂ᵀX̂ + λI)⁻¹ rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_len(self.op.dim(), rhs.len())?;
        match &self.correction {
            Correction::RankOne { z, coef } => {
                let mut x = self.solve_blocks(rhs, &self.tol)?;
                let scale = coef * dot(z, rhs);
                for (xi, zi) in x.iter_mut().zip(z) {
                    *xi += scale * zi;
                }
                Ok(x)
            }
            Correction::Degenerate => {
                let sol = conjugate_gradient(|v| self.op.apply_unchecked(v), rhs, &self.tol)?;
                self.stats.record(&sol);
                Ok(sol.x)
            }
        }
    }

    /// `B⁻¹ rhs`, one independent CG run per block.
    fn solve_blocks(&self, rhs: &[f64], tol: &SolverTolerances) -> Result<Vec<f64>> {
        let lambda = self.op.lambda();
        let parts: Vec<Result<Vec<f64>>> = self
            .blocks
            .par_iter()
            .map(|block| {
                let sol = conjugate_gradient(
                    |u| {
                        let xu = par_matvec(&block.x, u);
                        let mut out = block.x.matvec_t(&xu).expect("row count matches");
                        for (o, ui) in out.iter_mut().zip(u) {
                            *o += lambda * ui;
                        }
                        out
                    },
                    &rhs[block.cols.clone()],
                    tol,
                )?;
                self.stats.record(&sol);
                Ok(sol.x)
            })
            .collect();
        let mut out = Vec::with_capacity(rhs.len());
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }
}

/// Convenience wrapper: builds a [`BlockSolver`] and solves once.
pub fn block_solve(
    op: &CenteredGramOperator,
    blocks: &[Range<usize>],
    rhs: &[f64],
    tol: &SolverTolerances,
) -> Result<Vec<f64>> {
    BlockSolver::new(op, blocks, tol)?.solve(rhs)
}
