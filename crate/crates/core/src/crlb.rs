//! Cramér-Rao lower bounds for joint delay/Doppler estimation.
//!
//! Signal model per pilot resource element:
//!
//! ```text
//! y = h exp(j 2 pi t theta) exp(-j 2 pi f tau) + w,   t = m T fc,  f = n spacing
//! tau = 2R/c0,  theta = 2v/c0
//! ```
//!
//! `fisher_oracle` sums the Fisher entries directly over every pilot of both
//! bands; `crlb_closed_form` evaluates the per-scheme closed expressions,
//! which assume both bands share `N`, `M` and `T fc`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{sigma_for_snr, ChannelInfoMatrix};
use crate::config::{BandConfig, CaConfig, ConfigError, PilotPattern, Scheme};
use crate::grid::pilot_index_sets;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrlbError {
    #[error("Fisher matrix is singular (det = {det:e})")]
    SingularFisher { det: f64 },
    #[error("h and sigma must be finite and > 0 (h = {h}, sigma = {sigma})")]
    InvalidInputs { h: f64, sigma: f64 },
    #[error("closed form for {scheme} does not apply: {reason}")]
    UnsupportedScheme { scheme: Scheme, reason: String },
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbInputs {
    pub cfg: CaConfig,
    /// Constant gain magnitude `|h|`.
    pub h: f64,
    /// Noise standard deviation.
    pub sigma: f64,
}

impl CrlbInputs {
    pub fn new(cfg: CaConfig, h: f64, sigma: f64) -> Result<Self, CrlbError> {
        if !(h > 0.0 && h.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(CrlbError::InvalidInputs { h, sigma });
        }
        Ok(CrlbInputs {
            cfg: cfg.validate()?,
            h,
            sigma,
        })
    }

    /// Unit gain with `sigma` set from an SNR in dB.
    pub fn from_snr(cfg: CaConfig, snr_db: f64) -> Result<Self, CrlbError> {
        Self::new(cfg, 1.0, sigma_for_snr(snr_db, Complex64::new(1.0, 0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrlbMethod {
    ClosedForm,
    Oracle,
}

impl CrlbMethod {
    pub fn name(self) -> &'static str {
        match self {
            CrlbMethod::ClosedForm => "closed-form",
            CrlbMethod::Oracle => "oracle",
        }
    }
}

/// Fisher information entries for `(tau, theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fisher {
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
}

impl Fisher {
    pub fn det(&self) -> f64 {
        self.f11 * self.f22 - self.f12 * self.f12
    }

    /// `(CRLB(tau), CRLB(theta))`.
    pub fn invert(&self) -> Result<(f64, f64), CrlbError> {
        let det = self.det();
        if !(det > 1e-12 * self.f11 * self.f22) {
            return Err(CrlbError::SingularFisher { det });
        }
        Ok((self.f22 / det, self.f11 / det))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbReport {
    pub crlb_tau: f64,
    pub crlb_theta: f64,
    /// m^2
    pub crlb_range: f64,
    /// (m/s)^2
    pub crlb_velocity: f64,
    pub rcrlb_range: f64,
    pub rcrlb_velocity: f64,
    pub method: CrlbMethod,
}

impl CrlbReport {
    pub fn from_parameter_bounds(
        crlb_tau: f64,
        crlb_theta: f64,
        c0: f64,
        method: CrlbMethod,
    ) -> Self {
        let k = c0 * c0 / 4.0;
        CrlbReport {
            crlb_tau,
            crlb_theta,
            crlb_range: k * crlb_tau,
            crlb_velocity: k * crlb_theta,
            rcrlb_range: (k * crlb_tau).sqrt(),
            rcrlb_velocity: (k * crlb_theta).sqrt(),
            method,
        }
    }
}

/// Direct summation over the pilot grid of each band.
pub fn fisher_bands(bands: &[BandConfig], h: f64, sigma: f64) -> Fisher {
    let (mut f11, mut f12, mut f22) = (0.0, 0.0, 0.0);
    for band in bands {
        let sets = pilot_index_sets(band);
        let tf = band.symbol_duration() * band.carrier_hz;
        for &m in &sets.symbols {
            let t = 2.0 * PI * m as f64 * tf;
            for &n in &sets.subcarriers {
                let f = 2.0 * PI * n as f64 * band.spacing_hz;
                f11 += f * f;
                f22 += t * t;
                f12 -= f * t;
            }
        }
    }
    let w = h * h / (sigma * sigma);
    Fisher {
        f11: w * f11,
        f12: w * f12,
        f22: w * f22,
    }
}

/// Fisher entries summed over both bands' pilots.
pub fn fisher_oracle(inputs: &CrlbInputs) -> Fisher {
    fisher_bands(&[inputs.cfg.low, inputs.cfg.high], inputs.h, inputs.sigma)
}

pub fn crlb_oracle(inputs: &CrlbInputs) -> Result<CrlbReport, CrlbError> {
    let (tau, theta) = fisher_oracle(inputs).invert()?;
    Ok(CrlbReport::from_parameter_bounds(
        tau,
        theta,
        inputs.cfg.speed_of_light,
        CrlbMethod::Oracle,
    ))
}

/// CRLB of one band on its own (single-band baselines).
pub fn crlb_single_band(
    band: &BandConfig,
    h: f64,
    sigma: f64,
    c0: f64,
) -> Result<CrlbReport, CrlbError> {
    let (tau, theta) = fisher_bands(&[*band], h, sigma).invert()?;
    Ok(CrlbReport::from_parameter_bounds(
        tau,
        theta,
        c0,
        CrlbMethod::Oracle,
    ))
}

/// Shared quantities of the closed forms.
struct Common {
    n: f64,
    m: f64,
    k: f64,
    q: f64,
    df1: f64,
    df2: f64,
    tf: f64,
    pre: f64,
}

fn common(inputs: &CrlbInputs) -> Result<Common, CrlbError> {
    let cfg = &inputs.cfg;
    let unsupported = |reason: String| CrlbError::UnsupportedScheme {
        scheme: cfg.scheme,
        reason,
    };
    let (lo, hi) = (&cfg.low, &cfg.high);
    if lo.subcarriers != hi.subcarriers || lo.symbols != hi.symbols {
        return Err(unsupported("bands must share N and M".into()));
    }
    let tf1 = lo.symbol_duration() * lo.carrier_hz;
    let tf = hi.symbol_duration() * hi.carrier_hz;
    if (tf1 - tf).abs() > 1e-9 * tf {
        return Err(unsupported("bands must share T*fc".into()));
    }
    let mut comb = None;
    let mut block = None;
    for p in [lo.pilot, hi.pilot] {
        let (slot, i) = match p {
            PilotPattern::Comb { interval } => (&mut comb, interval),
            PilotPattern::Block { interval } => (&mut block, interval),
        };
        if slot.is_some_and(|j| j != i) {
            return Err(unsupported(
                "pilot intervals must match across bands".into(),
            ));
        }
        *slot = Some(i);
    }
    let k = comb.unwrap_or(1) as f64;
    if matches!(cfg.scheme, Scheme::Ca1 | Scheme::Ca4)
        && (hi.spacing_hz - k * lo.spacing_hz).abs() > 1e-9 * hi.spacing_hz
    {
        return Err(unsupported(format!(
            "high spacing must be K = {k} times the low spacing"
        )));
    }
    let c0 = cfg.speed_of_light;
    Ok(Common {
        n: lo.subcarriers as f64,
        m: lo.symbols as f64,
        k,
        q: block.unwrap_or(1) as f64,
        df1: lo.spacing_hz,
        df2: hi.spacing_hz,
        tf,
        pre: 3.0 * c0 * c0 * inputs.sigma.powi(2) / (8.0 * PI * PI * inputs.h.powi(2)),
    })
}

/// Returns `(CRLB(R), CRLB(v))` in m^2 and (m/s)^2.
fn closed_pair(scheme: Scheme, c: &Common) -> (f64, f64) {
    let Common {
        n,
        m,
        k,
        q,
        df1,
        df2,
        tf,
        pre,
    } = *c;
    let na = n / k;
    let mb = m / q;
    match scheme {
        Scheme::Ca1 => {
            let a = m * na * (na - 1.0) * (2.0 * na - 1.0) + mb * n * (n - 1.0) * (2.0 * n - 1.0);
            let b = na * m * (m - 1.0) * (2.0 * m - 1.0)
                + n * q * q * mb * (mb - 1.0) * (2.0 * mb - 1.0);
            let cc = na * (na - 1.0) * m * (m - 1.0) + n * (n - 1.0) * mb * (mb - 1.0) * q;
            (
                pre / (df2 * df2) / (a - 9.0 * cc * cc / (4.0 * b)),
                pre / (tf * tf) / (b - 9.0 * cc * cc / (4.0 * a)),
            )
        }
        Scheme::Ca2 => {
            let a = df2 * df2 * k * k * m * na * (na - 1.0) * (2.0 * na - 1.0)
                + df1 * df1 * mb * n * (n - 1.0) * (2.0 * n - 1.0);
            let b = na * m * (m - 1.0) * (2.0 * m - 1.0)
                + n * q * q * mb * (mb - 1.0) * (2.0 * mb - 1.0);
            let cc = df2 * k * na * (na - 1.0) * m * (m - 1.0)
                + df1 * n * (n - 1.0) * mb * (mb - 1.0) * q;
            (
                pre / (a - 9.0 * cc * cc / (4.0 * b)),
                pre / (tf * tf) / (b - 9.0 * cc * cc / (4.0 * a)),
            )
        }
        Scheme::Ca3 => {
            let s1 = df1 + df2;
            let s2 = df1 * df1 + df2 * df2;
            let r = pre
                / (n * (n - 1.0)
                    * mb
                    * (s2 * (2.0 * n - 1.0)
                        - 9.0 * s1 * s1 * (n - 1.0) * (mb - 1.0) / (8.0 * (2.0 * mb - 1.0))));
            (
                r,
                pre / (tf * tf) / (q * q * full_block_velocity_denominator(c)),
            )
        }
        Scheme::Ca4 => {
            let r = pre
                / (df2 * df2)
                / (na
                    * (na - 1.0)
                    * m
                    * ((2.0 * na - 1.0) * (k * k + 1.0)
                        - 9.0 * (1.0 + k).powi(2) * (na - 1.0) * (m - 1.0)
                            / (8.0 * (2.0 * m - 1.0))));
            let v = pre
                / (tf * tf)
                / (na
                    * (m - 1.0)
                    * m
                    * (2.0 * (2.0 * m - 1.0)
                        - 9.0 * (1.0 + k).powi(2) * (na - 1.0) * (m - 1.0)
                            / (4.0 * (1.0 + k * k) * (2.0 * na - 1.0))));
            (r, v)
        }
    }
}

fn full_block_velocity_denominator(c: &Common) -> f64 {
    let mb = c.m / c.q;
    let s1 = c.df1 + c.df2;
    let s2 = c.df1 * c.df1 + c.df2 * c.df2;
    c.n * mb
        * (mb - 1.0)
        * (2.0 * (2.0 * mb - 1.0)
            - 9.0 * s1 * s1 * (c.n - 1.0) * (mb - 1.0) / (4.0 * s2 * (2.0 * c.n - 1.0)))
}

pub fn crlb_closed_form(inputs: &CrlbInputs) -> Result<CrlbReport, CrlbError> {
    let c = common(inputs)?;
    let (r, v) = closed_pair(inputs.cfg.scheme, &c);
    if !(r > 0.0 && v > 0.0 && r.is_finite() && v.is_finite()) {
        return Err(CrlbError::SingularFisher { det: 0.0 });
    }
    let k = inputs.cfg.speed_of_light.powi(2) / 4.0;
    Ok(CrlbReport::from_parameter_bounds(
        r / k,
        v / k,
        inputs.cfg.speed_of_light,
        CrlbMethod::ClosedForm,
    ))
}

/// Full-block velocity bound in the commonly quoted form, which omits the
/// `Q^2` factor carried by the block symbol spacing. Off from the Fisher
/// summation by exactly `Q^2`; kept for comparison only.
pub fn full_block_velocity_as_printed(inputs: &CrlbInputs) -> Result<f64, CrlbError> {
    let c = common(inputs)?;
    Ok(c.pre / (c.tf * c.tf) / full_block_velocity_denominator(&c))
}

pub fn crlb(inputs: &CrlbInputs, method: CrlbMethod) -> Result<CrlbReport, CrlbError> {
    match method {
        CrlbMethod::ClosedForm => crlb_closed_form(inputs),
        CrlbMethod::Oracle => crlb_oracle(inputs),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbSweepRow {
    pub snr_db: f64,
    pub low_spacing_hz: f64,
    pub high_spacing_hz: f64,
    pub report: CrlbReport,
}

/// CRLBs over an SNR grid crossed with low-band spacings (high band at the
/// config's integer ratio, CPs re-derived). Rows ordered spacing-major.
pub fn crlb_sweep(
    cfg: &CaConfig,
    snr_db: &[f64],
    low_spacings_hz: &[f64],
    method: CrlbMethod,
) -> Result<Vec<CrlbSweepRow>, CrlbError> {
    if snr_db.is_empty() || low_spacings_hz.is_empty() {
        return Err(CrlbError::EmptyGrid);
    }
    let mut rows = Vec::with_capacity(snr_db.len() * low_spacings_hz.len());
    for &df in low_spacings_hz {
        let c = cfg.with_low_spacing(df)?;
        for &snr in snr_db {
            rows.push(CrlbSweepRow {
                snr_db: snr,
                low_spacing_hz: c.low.spacing_hz,
                high_spacing_hz: c.high.spacing_hz,
                report: crlb(&CrlbInputs::from_snr(c, snr)?, method)?,
            });
        }
    }
    Ok(rows)
}

/// One pilot observation for the likelihood: frequency offset `n spacing`,
/// scaled time `m T fc`, received value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub freq_hz: f64,
    pub time_scaled: f64,
    pub y: Complex64,
}

/// Pilot entries of a channel-information matrix as observations.
pub fn observations(d: &ChannelInfoMatrix) -> Vec<Observation> {
    let band = &d.band;
    let tf = band.symbol_duration() * band.carrier_hz;
    d.values
        .indexed_iter()
        .filter(|(idx, _)| d.mask[*idx])
        .map(|((n, m), &y)| Observation {
            freq_hz: n as f64 * band.spacing_hz,
            time_scaled: m as f64 * tf,
            y,
        })
        .collect()
}

pub fn signal(h: f64, o: &Observation, tau: f64, theta: f64) -> Complex64 {
    Complex64::from_polar(h, 2.0 * PI * (o.time_scaled * theta - o.freq_hz * tau))
}

/// `ln p = -K/2 ln(2 pi sigma^2) - 1/(2 sigma^2) sum |y - s|^2`.
pub fn log_likelihood(obs: &[Observation], h: f64, sigma: f64, tau: f64, theta: f64) -> f64 {
    let s2 = sigma * sigma;
    let sq: f64 = obs
        .iter()
        .map(|o| (o.y - signal(h, o, tau, theta)).norm_sqr())
        .sum();
    -0.5 * obs.len() as f64 * (2.0 * PI * s2).ln() - sq / (2.0 * s2)
}

/// Analytic `(d ln p / d tau, d ln p / d theta)`.
pub fn score(obs: &[Observation], h: f64, sigma: f64, tau: f64, theta: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let j = Complex64::new(0.0, 1.0);
    let mut d_tau = Complex64::new(0.0, 0.0);
    let mut d_theta = Complex64::new(0.0, 0.0);
    for o in obs {
        let s = signal(h, o, tau, theta);
        let e = o.y - s;
        let bracket = e.conj() * s - e * s.conj();
        d_tau += bracket * j * 2.0 * PI * o.freq_hz;
        d_theta += bracket * j * 2.0 * PI * o.time_scaled;
    }
    (-d_tau.re / (2.0 * s2), d_theta.re / (2.0 * s2))
}
