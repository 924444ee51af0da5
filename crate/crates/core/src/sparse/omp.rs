use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::operator::norm;
use super::{certify_kkt, LassoProblem, RecoveryResult, SparseError};

/// Relative margin under which two correlations count as tied; ties go to
/// the lower column index. Periodic masks make some columns identical on the
/// observed rows, so exact ties are expected there.
const TIE_RTOL: f64 = 1e-9;

/// Orthogonal matching pursuit with at most `sparsity` atoms.
///
/// Stops early when the residual norm drops below `p.tol * ||d||`.
pub fn solve_omp(p: &LassoProblem<'_>, sparsity: usize) -> Result<RecoveryResult, SparseError> {
    if sparsity == 0 {
        return Err(SparseError::InvalidSparsity);
    }
    let op = p.operator;
    let n = op.n();
    let rows = op.observed_rows().len();
    let d = DVector::from_column_slice(&p.observations);
    let d_norm = norm(&p.observations);

    let mut support: Vec<usize> = Vec::new();
    let mut coeffs = DVector::<Complex64>::zeros(0);
    let mut residual = p.observations.clone();
    let mut iterations = 0;

    while support.len() < sparsity.min(n) {
        if norm(&residual) <= p.tol * d_norm {
            break;
        }
        iterations += 1;
        let corr = op.adjoint(&residual)?;
        let best = corr
            .iter()
            .enumerate()
            .filter(|(j, _)| !support.contains(j))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        let Some(pick) = corr
            .iter()
            .enumerate()
            .find(|(j, c)| !support.contains(j) && c.norm() >= best * (1.0 - TIE_RTOL))
            .map(|(j, _)| j)
        else {
            break;
        };
        support.push(pick);

        let mut a_s = DMatrix::<Complex64>::zeros(rows, support.len());
        for (col, &j) in support.iter().enumerate() {
            a_s.set_column(col, &DVector::from_vec(op.column(j)));
        }
        coeffs = a_s
            .clone()
            .svd(true, true)
            .solve(&d, 1e-12)
            .expect("SVD computed with both factors");
        let fit = &a_s * &coeffs;
        residual = d.iter().zip(fit.iter()).map(|(a, b)| a - b).collect();
    }

    let mut x_hat = vec![Complex64::new(0.0, 0.0); n];
    for (&j, c) in support.iter().zip(coeffs.iter()) {
        x_hat[j] = *c;
    }
    let objective = p.objective(&x_hat)?;
    let kkt_residual = certify_kkt(p, &x_hat)?;
    Ok(RecoveryResult {
        x_hat,
        iterations,
        objective,
        kkt_residual,
    })
}
