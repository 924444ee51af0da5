//! Range and velocity estimation from the two bands' channel-information
//! matrices.
//!
//! Spectra are magnitude accumulations over many 1-D transforms (columns for
//! range, rows for velocity), normalized once at the end and peak-searched.
//! Fully observed vectors use a plain unitary (I)DFT; vectors with pilot gaps
//! go through FISTA on the masked Fourier operator, whose output lives in the
//! same units, so both kinds of spectra can be added directly.
//!
//! Staggered scheme (CA1):
//!
//! ```text
//! range:    sum_{pilot cols} |IDFT(D_high[:, m])|  +  sum_{all cols} |CS-IDFT(D'_low[:a+1, m])|
//! velocity: sum_{pilot rows} |DFT(D_low[n, :])|    +  sum_{all rows} |CS-DFT(D_high[n, ::Q])|
//! ```
//!
//! The other schemes estimate each band on its own and average the physical
//! values.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::ChannelInfoMatrix;
use crate::config::{BandConfig, BandId, CaConfig, ConfigError, PilotPattern, Scheme};
use crate::fusion::{
    build_comb_selection, build_range_selection, build_velocity_selection, rearrange_low_band,
    FusionError,
};
use crate::sparse::{
    solve_fista, Direction, LassoProblem, SensingOperator, SolverOptions, SparseError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("scheme {found} not supported here (expected {expected})")]
    SchemeMismatch {
        expected: &'static str,
        found: Scheme,
    },
    #[error("band grids disagree: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateKind {
    Range,
    Velocity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub values: Vec<f64>,
    /// Physical width of one bin (m or m/s).
    pub bin_width: f64,
    pub normalized: bool,
    /// Peak search covers bins `[0, search_bins)`. Smaller than the spectrum
    /// length when periodic pilot gaps alias the upper bins onto the lower.
    pub search_bins: usize,
}

impl PowerSpectrum {
    pub fn new(values: Vec<f64>, bin_width: f64) -> Self {
        let search_bins = values.len();
        PowerSpectrum {
            values,
            bin_width,
            normalized: false,
            search_bins,
        }
    }

    pub fn with_search_bins(mut self, bins: usize) -> Self {
        self.search_bins = bins.clamp(1, self.values.len());
        self
    }

    /// Scales so the maximum is 1 (no-op on an all-zero spectrum).
    pub fn normalize(&mut self) {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= max);
        }
        self.normalized = true;
    }

    /// First index of the maximum within the search window.
    pub fn peak_bin(&self) -> usize {
        let window = &self.values[..self.search_bins];
        let mut best = 0;
        for (i, &v) in window.iter().enumerate() {
            if v > window[best] {
                best = i;
            }
        }
        best
    }

    pub fn physical(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub kind: EstimateKind,
    pub peak_bin: usize,
    pub value: f64,
    pub spectrum: PowerSpectrum,
}

impl Estimate {
    fn from_spectrum(kind: EstimateKind, mut spectrum: PowerSpectrum) -> Self {
        spectrum.normalize();
        let peak_bin = spectrum.peak_bin();
        Estimate {
            kind,
            peak_bin,
            value: spectrum.physical(peak_bin),
            spectrum,
        }
    }
}

/// Final range/velocity pair plus the estimates it was built from: one fused
/// estimate per quantity for CA1, one per band (low, high) otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeEstimate {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub range: Vec<Estimate>,
    pub velocity: Vec<Estimate>,
}

fn add_into(acc: &mut [f64], mags: &[f64]) {
    for (a, m) in acc.iter_mut().zip(mags) {
        *a += m;
    }
}

/// Sums per-vector magnitude spectra in vector order so the result does not
/// depend on how the work was scheduled.
fn accumulate(len: usize, parts: Vec<Vec<f64>>) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in &parts {
        add_into(&mut acc, p);
    }
    acc
}

/// `sum_v |A_full^H v|` for fully observed vectors.
fn plain_spectrum(
    direction: Direction,
    len: usize,
    vectors: Vec<Vec<Complex64>>,
) -> Result<Vec<f64>, EstimateError> {
    let op = SensingOperator::full(direction, len)?;
    let parts = vectors
        .par_iter()
        .map(|v| -> Result<Vec<f64>, SparseError> {
            Ok(op.adjoint(v)?.iter().map(|z| z.norm()).collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(accumulate(len, parts))
}

/// `sum_v |x_hat(v)|` with `x_hat` the FISTA solution for observations `v`.
fn cs_spectrum(
    op: &SensingOperator,
    observations: Vec<Vec<Complex64>>,
    opts: &SolverOptions,
) -> Result<Vec<f64>, EstimateError> {
    // Resolve L once before fanning out.
    op.lipschitz();
    let parts = observations
        .into_par_iter()
        .map(|d| -> Result<Vec<f64>, SparseError> {
            let p = LassoProblem::new(op, d, opts)?;
            Ok(solve_fista(&p)?.x_hat.iter().map(|z| z.norm()).collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(accumulate(op.n(), parts))
}

fn column(d: &ChannelInfoMatrix, m: usize, rows: impl Iterator<Item = usize>) -> Vec<Complex64> {
    rows.map(|n| d.values[(n, m)]).collect()
}

fn row(d: &ChannelInfoMatrix, n: usize, cols: impl Iterator<Item = usize>) -> Vec<Complex64> {
    cols.map(|m| d.values[(n, m)]).collect()
}

fn check_matrix(d: &ChannelInfoMatrix, band: &BandConfig, id: BandId) -> Result<(), EstimateError> {
    if d.values.dim() != (band.subcarriers, band.symbols) || d.band.pilot != band.pilot {
        return Err(EstimateError::GridMismatch(format!(
            "{id} band matrix is {:?} with {:?}, config expects ({}, {}) with {:?}",
            d.values.dim(),
            d.band.pilot,
            band.subcarriers,
            band.symbols,
            band.pilot
        )));
    }
    Ok(())
}

fn require_scheme(cfg: &CaConfig, ok: bool, expected: &'static str) -> Result<(), EstimateError> {
    if !ok {
        return Err(EstimateError::SchemeMismatch {
            expected,
            found: cfg.scheme,
        });
    }
    Ok(())
}

/// Range spectrum of a block band: plain IDFT of every pilot column (unnormalized).
pub fn block_range_spectrum(d: &ChannelInfoMatrix) -> Result<Vec<f64>, EstimateError> {
    let PilotPattern::Block { interval } = d.band.pilot else {
        return Err(EstimateError::GridMismatch("expected a block band".into()));
    };
    let (n, m) = d.values.dim();
    let cols = (0..m)
        .step_by(interval)
        .map(|j| column(d, j, 0..n))
        .collect();
    plain_spectrum(Direction::ForwardDft, n, cols)
}

/// Velocity spectrum of a comb band: plain DFT of every pilot row (unnormalized).
pub fn comb_velocity_spectrum(d: &ChannelInfoMatrix) -> Result<Vec<f64>, EstimateError> {
    let PilotPattern::Comb { interval } = d.band.pilot else {
        return Err(EstimateError::GridMismatch("expected a comb band".into()));
    };
    let (n, m) = d.values.dim();
    let rows = (0..n).step_by(interval).map(|i| row(d, i, 0..m)).collect();
    plain_spectrum(Direction::InverseDft, m, rows)
}

/// Range spectrum of a comb band left in place: CS-IDFT of every column with
/// the rows at multiples of `K` observed (unnormalized).
pub fn comb_range_spectrum(
    d: &ChannelInfoMatrix,
    opts: &SolverOptions,
) -> Result<Vec<f64>, EstimateError> {
    let PilotPattern::Comb { interval } = d.band.pilot else {
        return Err(EstimateError::GridMismatch("expected a comb band".into()));
    };
    let (n, m) = d.values.dim();
    let op = SensingOperator::new(Direction::ForwardDft, build_comb_selection(interval, n))?;
    let obs = (0..m)
        .map(|j| column(d, j, (0..n).step_by(interval)))
        .collect();
    cs_spectrum(&op, obs, opts)
}

/// Velocity spectrum of a block band: CS-DFT of every row with the symbols at
/// multiples of `Q` observed (unnormalized).
pub fn block_velocity_spectrum(
    d: &ChannelInfoMatrix,
    opts: &SolverOptions,
) -> Result<Vec<f64>, EstimateError> {
    let PilotPattern::Block { interval } = d.band.pilot else {
        return Err(EstimateError::GridMismatch("expected a block band".into()));
    };
    let (n, m) = d.values.dim();
    let op = SensingOperator::new(Direction::InverseDft, build_velocity_selection(interval, m))?;
    let obs = (0..n)
        .map(|i| row(d, i, (0..m).step_by(interval)))
        .collect();
    cs_spectrum(&op, obs, opts)
}

/// Low-band contribution to the staggered range spectrum: rearrange the comb
/// rows to the top, then CS-IDFT every column with the leading rows observed.
pub fn rearranged_low_range_spectrum(
    d_low: &ChannelInfoMatrix,
    k_ratio: usize,
    opts: &SolverOptions,
) -> Result<Vec<f64>, EstimateError> {
    let r = rearrange_low_band(d_low, k_ratio)?;
    let (n, m) = r.values.dim();
    let op = SensingOperator::new(
        Direction::ForwardDft,
        build_range_selection(r.valid_rows, n),
    )?;
    let obs = (0..m)
        .map(|j| {
            r.values
                .column(j)
                .iter()
                .take(r.valid_rows)
                .copied()
                .collect()
        })
        .collect();
    cs_spectrum(&op, obs, opts)
}

/// Algorithm for the staggered scheme's range (low comb + high block).
pub fn estimate_range_staggered(
    d_low: &ChannelInfoMatrix,
    d_high: &ChannelInfoMatrix,
    cfg: &CaConfig,
    opts: &SolverOptions,
) -> Result<Estimate, EstimateError> {
    require_scheme(cfg, cfg.scheme == Scheme::Ca1, "CA1")?;
    let cfg = cfg.validate()?;
    check_matrix(d_low, &cfg.low, BandId::Low)?;
    check_matrix(d_high, &cfg.high, BandId::High)?;
    if cfg.low.subcarriers != cfg.high.subcarriers {
        return Err(EstimateError::GridMismatch(
            "range fusion needs equal subcarrier counts".into(),
        ));
    }
    let mut total = block_range_spectrum(d_high)?;
    let low = rearranged_low_range_spectrum(d_low, cfg.spacing_ratio()?, opts)?;
    add_into(&mut total, &low);
    Ok(Estimate::from_spectrum(
        EstimateKind::Range,
        PowerSpectrum::new(total, cfg.range_bin_width(BandId::High)),
    ))
}

/// Algorithm for the staggered scheme's velocity (low comb + high block).
pub fn estimate_velocity_staggered(
    d_low: &ChannelInfoMatrix,
    d_high: &ChannelInfoMatrix,
    cfg: &CaConfig,
    opts: &SolverOptions,
) -> Result<Estimate, EstimateError> {
    require_scheme(cfg, cfg.scheme == Scheme::Ca1, "CA1")?;
    let cfg = cfg.validate()?;
    check_matrix(d_low, &cfg.low, BandId::Low)?;
    check_matrix(d_high, &cfg.high, BandId::High)?;
    if cfg.low.symbols != cfg.high.symbols {
        return Err(EstimateError::GridMismatch(
            "velocity fusion needs equal symbol counts".into(),
        ));
    }
    let mut total = comb_velocity_spectrum(d_low)?;
    let high = block_velocity_spectrum(d_high, opts)?;
    add_into(&mut total, &high);
    Ok(Estimate::from_spectrum(
        EstimateKind::Velocity,
        PowerSpectrum::new(total, cfg.velocity_bin_width(BandId::High)),
    ))
}

/// Single-band range estimate with the pattern-appropriate primitive.
///
/// Comb bands alias every `N/K` bins, so the peak search is confined to the
/// first `N/K` bins.
pub fn band_range_estimate(
    d: &ChannelInfoMatrix,
    c0: f64,
    opts: &SolverOptions,
) -> Result<Estimate, EstimateError> {
    let band = &d.band;
    let width = c0 / (2.0 * band.spacing_hz * band.subcarriers as f64);
    let spectrum = match band.pilot {
        PilotPattern::Block { .. } => PowerSpectrum::new(block_range_spectrum(d)?, width),
        PilotPattern::Comb { interval } => PowerSpectrum::new(comb_range_spectrum(d, opts)?, width)
            .with_search_bins(band.subcarriers / interval),
    };
    Ok(Estimate::from_spectrum(EstimateKind::Range, spectrum))
}

/// Single-band velocity estimate with the pattern-appropriate primitive.
///
/// Block bands alias every `M/Q` bins, so the peak search is confined to the
/// first `M/Q` bins.
pub fn band_velocity_estimate(
    d: &ChannelInfoMatrix,
    c0: f64,
    opts: &SolverOptions,
) -> Result<Estimate, EstimateError> {
    let band = &d.band;
    let width = c0 / (2.0 * band.carrier_hz * band.symbol_duration() * band.symbols as f64);
    let spectrum = match band.pilot {
        PilotPattern::Comb { .. } => PowerSpectrum::new(comb_velocity_spectrum(d)?, width),
        PilotPattern::Block { interval } => {
            PowerSpectrum::new(block_velocity_spectrum(d, opts)?, width)
                .with_search_bins(band.symbols / interval)
        }
    };
    Ok(Estimate::from_spectrum(EstimateKind::Velocity, spectrum))
}

/// CA2, CA3 and CA4: estimate each band separately and average the physical
/// values.
pub fn estimate_scheme(
    d_low: &ChannelInfoMatrix,
    d_high: &ChannelInfoMatrix,
    cfg: &CaConfig,
    opts: &SolverOptions,
) -> Result<SchemeEstimate, EstimateError> {
    require_scheme(cfg, cfg.scheme != Scheme::Ca1, "CA2, CA3 or CA4")?;
    let cfg = cfg.validate()?;
    check_matrix(d_low, &cfg.low, BandId::Low)?;
    check_matrix(d_high, &cfg.high, BandId::High)?;
    let c0 = cfg.speed_of_light;
    let range = vec![
        band_range_estimate(d_low, c0, opts)?,
        band_range_estimate(d_high, c0, opts)?,
    ];
    let velocity = vec![
        band_velocity_estimate(d_low, c0, opts)?,
        band_velocity_estimate(d_high, c0, opts)?,
    ];
    Ok(SchemeEstimate {
        range_m: 0.5 * (range[0].value + range[1].value),
        velocity_mps: 0.5 * (velocity[0].value + velocity[1].value),
        range,
        velocity,
    })
}

/// Dispatches on `cfg.scheme`.
pub fn estimate(
    d_low: &ChannelInfoMatrix,
    d_high: &ChannelInfoMatrix,
    cfg: &CaConfig,
    opts: &SolverOptions,
) -> Result<SchemeEstimate, EstimateError> {
    if cfg.scheme == Scheme::Ca1 {
        let r = estimate_range_staggered(d_low, d_high, cfg, opts)?;
        let v = estimate_velocity_staggered(d_low, d_high, cfg, opts)?;
        Ok(SchemeEstimate {
            range_m: r.value,
            velocity_mps: v.value,
            range: vec![r],
            velocity: vec![v],
        })
    } else {
        estimate_scheme(d_low, d_high, cfg, opts)
    }
}

/// Greedy peak picking: repeatedly take the largest remaining bin and
/// exclude `guard` bins on either side. Returned in descending value order.
pub fn top_k_peaks(spectrum: &PowerSpectrum, k: usize, guard: usize) -> Vec<(usize, f64)> {
    let len = spectrum.values.len();
    let mut excluded = vec![false; len];
    let mut peaks = Vec::with_capacity(k);
    while peaks.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..len {
            if !excluded[i] && best.is_none_or(|b| spectrum.values[i] > spectrum.values[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        peaks.push((b, spectrum.values[b]));
        let lo = b.saturating_sub(guard);
        let hi = (b + guard).min(len - 1);
        excluded[lo..=hi].iter_mut().for_each(|e| *e = true);
    }
    peaks
}
