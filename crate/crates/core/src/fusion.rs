//! Cross-band alignment of channel-information matrices.
//!
//! The low-band comb rows sit at subcarriers `0, K, 2K, ...` with spacing
//! `df_low`. Because `K * df_low = df_high`, gathering those rows to the top of
//! the matrix yields a range phase law sampled on the high-band subcarrier
//! grid, so both bands share range bins.

use ndarray::{s, Array2};
use num_complex::Complex64;
use thiserror::Error;

use crate::channel::ChannelInfoMatrix;
use crate::config::PilotPattern;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("expected a comb-structured matrix with interval {expected}, got {found:?}")]
    PatternMismatch {
        expected: usize,
        found: PilotPattern,
    },
}

/// Low-band matrix with its populated comb rows packed at the top.
#[derive(Debug, Clone)]
pub struct RearrangedMatrix {
    pub values: Array2<Complex64>,
    /// Number of populated leading rows (`N / K`).
    pub valid_rows: usize,
}

impl RearrangedMatrix {
    pub fn column(&self, m: usize) -> Vec<Complex64> {
        self.values.column(m).to_vec()
    }
}

pub fn rearrange_low_band(
    d_low: &ChannelInfoMatrix,
    k_ratio: usize,
) -> Result<RearrangedMatrix, FusionError> {
    match d_low.band.pilot {
        PilotPattern::Comb { interval } if interval == k_ratio && k_ratio > 0 => {}
        found => {
            return Err(FusionError::PatternMismatch {
                expected: k_ratio,
                found,
            })
        }
    }
    let (n, m) = d_low.values.dim();
    let valid_rows = n / k_ratio;
    let mut values = Array2::zeros((n, m));
    values
        .slice_mut(s![..valid_rows, ..])
        .assign(&d_low.values.slice(s![..;k_ratio, ..]));
    Ok(RearrangedMatrix { values, valid_rows })
}

/// Observed-row mask for the rearranged low band: the first `valid_rows`.
pub fn build_range_selection(valid_rows: usize, n: usize) -> Vec<bool> {
    assert!(
        valid_rows > 0 && valid_rows <= n,
        "need 0 < valid_rows <= n"
    );
    (0..n).map(|i| i < valid_rows).collect()
}

/// Observed-symbol mask for a block band: every `q`-th symbol.
pub fn build_velocity_selection(q: usize, m: usize) -> Vec<bool> {
    assert!(q > 0 && m % q == 0, "q must divide m");
    (0..m).map(|i| i % q == 0).collect()
}

/// Observed-subcarrier mask for a comb band left in place: every `k`-th row.
pub fn build_comb_selection(k: usize, n: usize) -> Vec<bool> {
    build_velocity_selection(k, n)
}
