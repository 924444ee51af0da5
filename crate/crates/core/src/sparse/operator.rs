use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use super::SparseError;
use crate::rng::seeded;

/// Which unitary transform maps the sparse profile to the measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `y[k] = n^{-1/2} sum_j x[j] exp(-2 pi i jk/n)`; range profiles.
    ForwardDft,
    /// `y[k] = n^{-1/2} sum_j x[j] exp(+2 pi i jk/n)`; Doppler profiles.
    InverseDft,
}

/// A unitary DFT (or inverse DFT) of length `n` restricted to the rows where
/// `mask` is true.
#[derive(Clone)]
pub struct SensingOperator {
    n: usize,
    direction: Direction,
    mask: Vec<bool>,
    rows: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    scale: f64,
    lipschitz: OnceLock<f64>,
}

impl fmt::Debug for SensingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SensingOperator")
            .field("n", &self.n)
            .field("direction", &self.direction)
            .field("observed", &self.rows.len())
            .finish()
    }
}

/// Reusable buffers for repeated operator applications.
pub struct Workspace {
    pub(crate) buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SensingOperator {
    pub fn new(direction: Direction, mask: Vec<bool>) -> Result<Self, SparseError> {
        let rows: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        if rows.is_empty() {
            return Err(SparseError::EmptyMask);
        }
        let n = mask.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Ok(SensingOperator {
            n,
            direction,
            mask,
            rows,
            forward,
            inverse,
            scratch_len,
            scale: 1.0 / (n as f64).sqrt(),
            lipschitz: OnceLock::new(),
        })
    }

    pub fn full(direction: Direction, n: usize) -> Result<Self, SparseError> {
        Self::new(direction, vec![true; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of observed rows, ascending.
    pub fn observed_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            buf: vec![Complex64::new(0.0, 0.0); self.n],
            scratch: vec![Complex64::new(0.0, 0.0); self.scratch_len],
        }
    }

    fn transform(&self, ws: &mut Workspace, adjoint: bool) {
        let use_forward = (self.direction == Direction::ForwardDft) != adjoint;
        let plan = if use_forward {
            &self.forward
        } else {
            &self.inverse
        };
        plan.process_with_scratch(&mut ws.buf, &mut ws.scratch);
        for v in ws.buf.iter_mut() {
            *v *= self.scale;
        }
    }

    /// Unmasked transform of `ws.buf` in place.
    pub(crate) fn full_apply_in(&self, ws: &mut Workspace) {
        self.transform(ws, false);
    }

    /// Unmasked adjoint transform of `ws.buf` in place.
    pub(crate) fn full_adjoint_in(&self, ws: &mut Workspace) {
        self.transform(ws, true);
    }

    /// Zeroes unobserved rows of `ws.buf`.
    pub(crate) fn project_in(&self, ws: &mut Workspace) {
        for (v, &keep) in ws.buf.iter_mut().zip(&self.mask) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// `A x`: the transform of `x` at the observed rows.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>, SparseError> {
        self.check_len(x.len(), self.n)?;
        let mut ws = self.workspace();
        ws.buf.copy_from_slice(x);
        self.transform(&mut ws, false);
        Ok(self.rows.iter().map(|&r| ws.buf[r]).collect())
    }

    /// `A^H y` for `y` over the observed rows.
    pub fn adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>, SparseError> {
        self.check_len(y.len(), self.rows.len())?;
        let mut ws = self.workspace();
        self.scatter(y, &mut ws.buf);
        self.transform(&mut ws, true);
        Ok(ws.buf)
    }

    /// Writes observed-row values into a zero-filled length-`n` vector.
    pub(crate) fn scatter(&self, y: &[Complex64], out: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        for (&r, &v) in self.rows.iter().zip(y) {
            out[r] = v;
        }
    }

    /// Column `j` of `A` evaluated at the observed rows.
    pub fn column(&self, j: usize) -> Vec<Complex64> {
        let sign = match self.direction {
            Direction::ForwardDft => -1.0,
            Direction::InverseDft => 1.0,
        };
        self.rows
            .iter()
            .map(|&r| {
                let k = (r * j) % self.n;
                Complex64::from_polar(self.scale, sign * 2.0 * PI * k as f64 / self.n as f64)
            })
            .collect()
    }

    fn check_len(&self, found: usize, expected: usize) -> Result<(), SparseError> {
        if found != expected {
            return Err(SparseError::DimensionMismatch { expected, found });
        }
        Ok(())
    }

    /// Largest eigenvalue of `A^H A`, by power iteration to relative 1e-6.
    /// Cached after the first call.
    pub fn lipschitz(&self) -> f64 {
        *self
            .lipschitz
            .get_or_init(|| self.power_iteration(1e-6, 1000))
    }

    pub fn power_iteration(&self, rtol: f64, max_iters: usize) -> f64 {
        let mut rng = seeded(0x5EED_0F_A11);
        let mut ws = self.workspace();
        let mut v: Vec<Complex64> = (0..self.n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        normalize(&mut v);
        let mut estimate = 0.0;
        for _ in 0..max_iters {
            ws.buf.copy_from_slice(&v);
            self.transform(&mut ws, false);
            self.project_in(&mut ws);
            self.transform(&mut ws, true);
            let next = norm(&ws.buf);
            if next == 0.0 {
                return 0.0;
            }
            v.copy_from_slice(&ws.buf);
            normalize(&mut v);
            let done = (next - estimate).abs() <= rtol * next;
            estimate = next;
            if done {
                break;
            }
        }
        estimate
    }
}

pub(crate) fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n = norm(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
}
