//! Sparse spectrum recovery from partially observed Fourier samples.
//!
//! Solves `min_x 1/2 ||d - A x||^2 + lambda ||x||_1` where `A` is a unitary
//! DFT (or inverse DFT) restricted to a set of observed rows. FISTA is the
//! main solver; OMP is kept as a greedy baseline.

mod fista;
mod omp;
mod operator;

use num_complex::Complex64;
use thiserror::Error;

pub use fista::{solve_fista, solve_ista};
pub use omp::solve_omp;
pub use operator::{Direction, SensingOperator, Workspace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparseError {
    #[error("sensing mask has no observed rows")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sparsity must be >= 1")]
    InvalidSparsity,
    #[error("lambda must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
}

/// Solver knobs shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// `lambda = lambda_scale * ||A^H d||_inf` unless `lambda` is set.
    pub lambda_scale: f64,
    pub lambda: Option<f64>,
    pub max_iters: usize,
    /// Stop when `||x_k - x_{k-1}|| / ||x_k||` drops below this.
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            lambda_scale: 0.1,
            lambda: None,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoProblem<'a> {
    pub operator: &'a SensingOperator,
    pub observations: Vec<Complex64>,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl<'a> LassoProblem<'a> {
    /// Builds a problem, resolving the default lambda from the data.
    pub fn new(
        operator: &'a SensingOperator,
        observations: Vec<Complex64>,
        opts: &SolverOptions,
    ) -> Result<Self, SparseError> {
        let expected = operator.observed_rows().len();
        if observations.len() != expected {
            return Err(SparseError::DimensionMismatch {
                expected,
                found: observations.len(),
            });
        }
        let lambda = match opts.lambda {
            Some(l) => l,
            None => opts.lambda_scale * correlation_inf_norm(operator, &observations)?,
        };
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(SparseError::InvalidLambda(lambda));
        }
        Ok(LassoProblem {
            operator,
            observations,
            lambda,
            max_iters: opts.max_iters,
            tol: opts.tol,
        })
    }

    /// `1/2 ||d - A x||^2 + lambda ||x||_1`.
    pub fn objective(&self, x: &[Complex64]) -> Result<f64, SparseError> {
        let ax = self.operator.apply(x)?;
        let fit: f64 = ax
            .iter()
            .zip(&self.observations)
            .map(|(a, d)| (d - a).norm_sqr())
            .sum();
        let l1: f64 = x.iter().map(|z| z.norm()).sum();
        Ok(0.5 * fit + self.lambda * l1)
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub x_hat: Vec<Complex64>,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// `||A^H d||_inf`.
pub fn correlation_inf_norm(
    operator: &SensingOperator,
    observations: &[Complex64],
) -> Result<f64, SparseError> {
    Ok(operator
        .adjoint(observations)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Optimality certificate for the LASSO.
///
/// With `g = A^H (d - A x)`, optimal points satisfy `|g_i| <= lambda` where
/// `x_i = 0` and `g_i = lambda x_i/|x_i|` elsewhere. Returns the largest
/// violation; zero iff `x` is optimal.
pub fn certify_kkt(p: &LassoProblem<'_>, x: &[Complex64]) -> Result<f64, SparseError> {
    let ax = p.operator.apply(x)?;
    let residual: Vec<Complex64> = p.observations.iter().zip(&ax).map(|(d, a)| d - a).collect();
    let g = p.operator.adjoint(&residual)?;
    Ok(g.iter()
        .zip(x)
        .map(|(gi, xi)| {
            let r = xi.norm();
            if r == 0.0 {
                (gi.norm() - p.lambda).max(0.0)
            } else {
                (gi - xi * (p.lambda / r)).norm()
            }
        })
        .fold(0.0, f64::max))
}
