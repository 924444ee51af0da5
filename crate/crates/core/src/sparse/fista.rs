use num_complex::Complex64;

use super::{certify_kkt, LassoProblem, RecoveryResult, SparseError};

/// Complex soft thresholding: shrinks the modulus by `t`, keeps the phase.
#[inline]
fn shrink(z: Complex64, t: f64) -> Complex64 {
    let r = z.norm();
    if r <= t {
        Complex64::new(0.0, 0.0)
    } else {
        z * (1.0 - t / r)
    }
}

/// Accelerated proximal gradient (FISTA) with step `1/L`, `L` the largest
/// eigenvalue of `A^H A`.
pub fn solve_fista(p: &LassoProblem<'_>) -> Result<RecoveryResult, SparseError> {
    proximal_gradient(p, true)
}

/// Plain proximal gradient (ISTA), same step and stopping rule as FISTA.
pub fn solve_ista(p: &LassoProblem<'_>) -> Result<RecoveryResult, SparseError> {
    proximal_gradient(p, false)
}

fn proximal_gradient(p: &LassoProblem<'_>, momentum: bool) -> Result<RecoveryResult, SparseError> {
    let op = p.operator;
    let n = op.n();
    if p.observations.len() != op.observed_rows().len() {
        return Err(SparseError::DimensionMismatch {
            expected: op.observed_rows().len(),
            found: p.observations.len(),
        });
    }
    let zero = Complex64::new(0.0, 0.0);
    let lipschitz = op.lipschitz();
    let mut x = vec![zero; n];
    let mut iterations = 0;

    if lipschitz > 0.0 {
        let step = 1.0 / lipschitz;
        let threshold = p.lambda * step;
        let mut d_full = vec![zero; n];
        op.scatter(&p.observations, &mut d_full);
        let mut ws = op.workspace();
        let mut y = x.clone();
        let mut x_next = x.clone();
        let mut t = 1.0f64;

        for k in 1..=p.max_iters {
            iterations = k;
            // grad = A^H (A y - d)
            ws.buf.copy_from_slice(&y);
            op.full_apply_in(&mut ws);
            op.project_in(&mut ws);
            for (b, d) in ws.buf.iter_mut().zip(&d_full) {
                *b -= d;
            }
            op.full_adjoint_in(&mut ws);

            let mut diff_sq = 0.0;
            let mut next_sq = 0.0;
            for i in 0..n {
                let v = shrink(y[i] - ws.buf[i] * step, threshold);
                diff_sq += (v - x[i]).norm_sqr();
                next_sq += v.norm_sqr();
                x_next[i] = v;
            }

            if momentum {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                for i in 0..n {
                    y[i] = x_next[i] + (x_next[i] - x[i]) * beta;
                }
                t = t_next;
            } else {
                y.copy_from_slice(&x_next);
            }
            std::mem::swap(&mut x, &mut x_next);

            if diff_sq.sqrt() <= p.tol * next_sq.sqrt().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    let objective = p.objective(&x)?;
    let kkt_residual = certify_kkt(p, &x)?;
    Ok(RecoveryResult {
        x_hat: x,
        iterations,
        objective,
        kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{correlation_inf_norm, Direction, SensingOperator, SolverOptions};
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn shrink_examples() {
        let z = Complex64::new(3.0, 4.0);
        assert_eq!(shrink(z, 5.0), Complex64::new(0.0, 0.0));
        let s = shrink(z, 1.0);
        assert!((s - Complex64::new(2.4, 3.2)).norm() < 1e-15);
    }

    #[test]
    fn lambda_zero_full_mask_inverts() {
        let op = SensingOperator::full(Direction::ForwardDft, 32).unwrap();
        let x_true = random_vec(32, 7);
        let d = op.apply(&x_true).unwrap();
        let opts = SolverOptions {
            lambda: Some(0.0),
            ..Default::default()
        };
        let r = solve_fista(&LassoProblem::new(&op, d, &opts).unwrap()).unwrap();
        for (a, b) in r.x_hat.iter().zip(&x_true) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn one_sparse_half_mask_recovers_support() {
        let n = 64;
        let op = SensingOperator::new(Direction::ForwardDft, (0..n).map(|i| i < n / 2).collect())
            .unwrap();
        let true_idx = 19;
        let mut x_true = vec![Complex64::new(0.0, 0.0); n];
        x_true[true_idx] = Complex64::from_polar(1.0, 0.4);
        let d = op.apply(&x_true).unwrap();

        // Brute-force oracle: the true index maximises |A^H d| over all columns.
        let corr: Vec<f64> = (0..n)
            .map(|j| {
                op.column(j)
                    .iter()
                    .zip(&d)
                    .map(|(a, y)| a.conj() * y)
                    .sum::<Complex64>()
                    .norm()
            })
            .collect();
        let best = (0..n).max_by(|&a, &b| corr[a].total_cmp(&corr[b])).unwrap();
        assert_eq!(best, true_idx);

        let lambda = 0.01;
        let opts = SolverOptions {
            lambda: Some(lambda),
            max_iters: 5000,
            tol: 1e-12,
            ..Default::default()
        };
        let r = solve_fista(&LassoProblem::new(&op, d, &opts).unwrap()).unwrap();
        let peak = (0..n)
            .max_by(|&a, &b| r.x_hat[a].norm().total_cmp(&r.x_hat[b].norm()))
            .unwrap();
        assert_eq!(peak, true_idx);
        assert!((r.x_hat[true_idx].norm() - 1.0).abs() <= 0.05);
    }

    #[test]
    fn zero_data_gives_zero() {
        let op = SensingOperator::new(Direction::InverseDft, (0..16).map(|i| i % 4 == 0).collect())
            .unwrap();
        let opts = SolverOptions::default();
        let p = LassoProblem::new(&op, vec![Complex64::new(0.0, 0.0); 4], &opts).unwrap();
        let r = solve_fista(&p).unwrap();
        assert!(r.x_hat.iter().all(|z| z.norm() == 0.0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn converged_solution_is_certified() {
        let op =
            SensingOperator::new(Direction::ForwardDft, (0..32).map(|i| i < 12).collect()).unwrap();
        let d = random_vec(12, 3);
        let opts = SolverOptions {
            max_iters: 20000,
            tol: 1e-14,
            ..Default::default()
        };
        let p = LassoProblem::new(&op, d, &opts).unwrap();
        let r = solve_fista(&p).unwrap();
        assert!(r.kkt_residual <= 1e-4 * p.lambda, "kkt {}", r.kkt_residual);
        let mut bumped = r.x_hat.clone();
        bumped[0] += Complex64::new(0.1, 0.0);
        assert!(certify_kkt(&p, &bumped).unwrap() > 0.0);
    }

    #[test]
    fn objective_not_above_zero_point() {
        let op = SensingOperator::new(Direction::InverseDft, (0..64).map(|i| i % 4 == 0).collect())
            .unwrap();
        for seed in 0..10 {
            let d = random_vec(16, seed);
            let p = LassoProblem::new(&op, d.clone(), &SolverOptions::default()).unwrap();
            let r = solve_fista(&p).unwrap();
            let at_zero = 0.5 * d.iter().map(|z| z.norm_sqr()).sum::<f64>();
            assert!(r.objective <= at_zero);
            assert!(correlation_inf_norm(&op, &d).unwrap() > 0.0);
        }
    }
}
