//! Per-band OFDM numerology and the aggregation scheme that binds a low and a
//! high band together.
//!
//! Everything downstream (grid layout, phase laws, bin widths, CRLB sums)
//! reads its parameters from a validated [`CaConfig`]. Validation enforces the
//! two cross-band constraints the fusion estimators rely on:
//!
//! * the high/low subcarrier spacing ratio is a positive integer `K_ratio`,
//!   so the rearranged low-band comb rows land on the high-band subcarrier
//!   grid;
//! * `T_low * fc_low == T_high * fc_high`, so both bands put a given velocity
//!   in the same Doppler bin.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact vacuum speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Rounded speed of light used by the reproduction runs (m/s).
pub const ROUND_SPEED_OF_LIGHT: f64 = 3.0e8;

/// Relative tolerance for the exact cross-band constraints.
pub const CONSTRAINT_RTOL: f64 = 1e-12;

/// Minimum cyclic prefix for the 200 m design range (s).
pub const TABLE3_MIN_CP: f64 = 1.33e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{band} band: {reason}")]
    InvalidBand { band: BandId, reason: String },
    #[error("subcarrier spacing ratio high/low = {ratio} is not a positive integer")]
    NonIntegerSpacingRatio { ratio: f64 },
    #[error("velocity fusion requires T_low*fc_low == T_high*fc_high (residual {residual:e})")]
    VelocityFusionConstraintViolated { residual: f64 },
    #[error("{band} band: pilot interval {interval} does not divide {len}")]
    PilotIntervalDoesNotDivide {
        band: BandId,
        interval: usize,
        len: usize,
    },
    #[error("{band} band: comb interval {interval} must equal the spacing ratio {ratio}")]
    CombIntervalMismatch {
        band: BandId,
        interval: usize,
        ratio: usize,
    },
    #[error("{band} band pilot pattern does not match scheme {scheme}")]
    SchemePatternMismatch { scheme: Scheme, band: BandId },
    #[error("speed of light must be positive, got {0}")]
    InvalidSpeedOfLight(f64),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BandId {
    Low,
    High,
}

impl fmt::Display for BandId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandId::Low => f.write_str("low"),
            BandId::High => f.write_str("high"),
        }
    }
}

/// Pilot placement within one band's `N x M` resource grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PilotPattern {
    /// Every `interval`-th subcarrier on every symbol.
    Comb { interval: usize },
    /// Every subcarrier on every `interval`-th symbol.
    Block { interval: usize },
}

impl PilotPattern {
    pub fn is_comb(&self) -> bool {
        matches!(self, PilotPattern::Comb { .. })
    }

    pub fn interval(&self) -> usize {
        match *self {
            PilotPattern::Comb { interval } | PilotPattern::Block { interval } => interval,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// Subcarrier spacing (Hz).
    pub spacing_hz: f64,
    pub subcarriers: usize,
    pub symbols: usize,
    /// Cyclic prefix duration (s).
    pub cp_s: f64,
    pub pilot: PilotPattern,
}

impl BandConfig {
    /// Total OFDM symbol duration `1/spacing + cp` (s).
    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.spacing_hz + self.cp_s
    }

    /// Number of pilot-bearing subcarriers (`N/K` for comb, `N` for block).
    pub fn pilot_subcarrier_count(&self) -> usize {
        match self.pilot {
            PilotPattern::Comb { interval } => self.subcarriers / interval,
            PilotPattern::Block { .. } => self.subcarriers,
        }
    }

    /// Number of pilot-bearing symbols (`M` for comb, `M/Q` for block).
    pub fn pilot_symbol_count(&self) -> usize {
        match self.pilot {
            PilotPattern::Comb { .. } => self.symbols,
            PilotPattern::Block { interval } => self.symbols / interval,
        }
    }

    /// Checks the single-band invariants.
    pub fn check(&self, band: BandId) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::InvalidBand { band, reason };
        if self.subcarriers < 2 {
            return Err(invalid(format!("need N >= 2, got {}", self.subcarriers)));
        }
        if self.symbols < 2 {
            return Err(invalid(format!("need M >= 2, got {}", self.symbols)));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(invalid(format!(
                "carrier must be > 0, got {}",
                self.carrier_hz
            )));
        }
        if !(self.spacing_hz > 0.0 && self.spacing_hz.is_finite()) {
            return Err(invalid(format!(
                "spacing must be > 0, got {}",
                self.spacing_hz
            )));
        }
        if !(self.cp_s >= 0.0 && self.cp_s.is_finite()) {
            return Err(invalid(format!(
                "cyclic prefix must be >= 0, got {}",
                self.cp_s
            )));
        }
        let (interval, len) = match self.pilot {
            PilotPattern::Comb { interval } => (interval, self.subcarriers),
            PilotPattern::Block { interval } => (interval, self.symbols),
        };
        if interval == 0 || len % interval != 0 {
            return Err(ConfigError::PilotIntervalDoesNotDivide {
                band,
                interval,
                len,
            });
        }
        Ok(())
    }
}

/// The four aggregated pilot structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Staggered: low-band comb, high-band block.
    #[serde(rename = "CA1")]
    Ca1,
    /// Low-band block, high-band comb.
    #[serde(rename = "CA2")]
    Ca2,
    /// Both bands block.
    #[serde(rename = "CA3")]
    Ca3,
    /// Both bands comb.
    #[serde(rename = "CA4")]
    Ca4,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Ca1, Scheme::Ca2, Scheme::Ca3, Scheme::Ca4];

    pub fn low_is_comb(self) -> bool {
        matches!(self, Scheme::Ca1 | Scheme::Ca4)
    }

    pub fn high_is_comb(self) -> bool {
        matches!(self, Scheme::Ca2 | Scheme::Ca4)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ca1 => "CA1",
            Scheme::Ca2 => "CA2",
            Scheme::Ca3 => "CA3",
            Scheme::Ca4 => "CA4",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CA1" | "STAGGERED" => Ok(Scheme::Ca1),
            "CA2" => Ok(Scheme::Ca2),
            "CA3" | "FULL-BLOCK" => Ok(Scheme::Ca3),
            "CA4" | "FULL-COMB" => Ok(Scheme::Ca4),
            other => Err(ConfigError::Parse(format!("unknown scheme {other:?}"))),
        }
    }
}

fn default_speed_of_light() -> f64 {
    ROUND_SPEED_OF_LIGHT
}

/// Two bands plus the scheme binding them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaConfig {
    pub scheme: Scheme,
    #[serde(default = "default_speed_of_light")]
    pub speed_of_light: f64,
    pub low: BandConfig,
    pub high: BandConfig,
}

impl CaConfig {
    /// Checks all single-band and cross-band invariants and returns the
    /// config unchanged on success.
    pub fn validate(self) -> Result<Self, ConfigError> {
        if !(self.speed_of_light > 0.0 && self.speed_of_light.is_finite()) {
            return Err(ConfigError::InvalidSpeedOfLight(self.speed_of_light));
        }
        self.low.check(BandId::Low)?;
        self.high.check(BandId::High)?;
        if self.low.pilot.is_comb() != self.scheme.low_is_comb() {
            return Err(ConfigError::SchemePatternMismatch {
                scheme: self.scheme,
                band: BandId::Low,
            });
        }
        if self.high.pilot.is_comb() != self.scheme.high_is_comb() {
            return Err(ConfigError::SchemePatternMismatch {
                scheme: self.scheme,
                band: BandId::High,
            });
        }
        let ratio = self.spacing_ratio()?;
        if matches!(self.scheme, Scheme::Ca1 | Scheme::Ca2) {
            for (band, cfg) in [(BandId::Low, &self.low), (BandId::High, &self.high)] {
                if let PilotPattern::Comb { interval } = cfg.pilot {
                    if interval != ratio {
                        return Err(ConfigError::CombIntervalMismatch {
                            band,
                            interval,
                            ratio,
                        });
                    }
                }
            }
        }
        let residual = self.velocity_fusion_residual();
        let scale = (self.low.symbol_duration() * self.low.carrier_hz)
            .max(self.high.symbol_duration() * self.high.carrier_hz);
        if residual > CONSTRAINT_RTOL * scale {
            return Err(ConfigError::VelocityFusionConstraintViolated { residual });
        }
        Ok(self)
    }

    /// `spacing_high / spacing_low` as an exact positive integer.
    pub fn spacing_ratio(&self) -> Result<usize, ConfigError> {
        let ratio = self.high.spacing_hz / self.low.spacing_hz;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > CONSTRAINT_RTOL * rounded {
            return Err(ConfigError::NonIntegerSpacingRatio { ratio });
        }
        Ok(rounded as usize)
    }

    /// `|T_low fc_low - T_high fc_high|`.
    pub fn velocity_fusion_residual(&self) -> f64 {
        (self.low.symbol_duration() * self.low.carrier_hz
            - self.high.symbol_duration() * self.high.carrier_hz)
            .abs()
    }

    pub fn band(&self, id: BandId) -> &BandConfig {
        match id {
            BandId::Low => &self.low,
            BandId::High => &self.high,
        }
    }

    /// Range bin width `c0 / (2 spacing N)` for the given band (m).
    pub fn range_bin_width(&self, id: BandId) -> f64 {
        let b = self.band(id);
        self.speed_of_light / (2.0 * b.spacing_hz * b.subcarriers as f64)
    }

    /// Velocity bin width `c0 / (2 fc T M)` for the given band (m/s).
    pub fn velocity_bin_width(&self, id: BandId) -> f64 {
        let b = self.band(id);
        self.speed_of_light / (2.0 * b.carrier_hz * b.symbol_duration() * b.symbols as f64)
    }

    /// Same numerology with the pilot patterns rebuilt for `scheme`.
    pub fn with_scheme(&self, scheme: Scheme, comb_interval: usize, block_interval: usize) -> Self {
        let pattern = |comb: bool| {
            if comb {
                PilotPattern::Comb {
                    interval: comb_interval,
                }
            } else {
                PilotPattern::Block {
                    interval: block_interval,
                }
            }
        };
        let mut cfg = *self;
        cfg.scheme = scheme;
        cfg.low.pilot = pattern(scheme.low_is_comb());
        cfg.high.pilot = pattern(scheme.high_is_comb());
        cfg
    }

    /// Comb and block intervals in use (falls back to the other band's value,
    /// then to 1 when a scheme uses only one pattern).
    pub fn pilot_intervals(&self) -> (usize, usize) {
        let mut comb = None;
        let mut block = None;
        for p in [self.low.pilot, self.high.pilot] {
            match p {
                PilotPattern::Comb { interval } => comb = comb.or(Some(interval)),
                PilotPattern::Block { interval } => block = block.or(Some(interval)),
            }
        }
        (comb.unwrap_or(1), block.unwrap_or(1))
    }

    /// Rescales both bands to a new low-band spacing, keeping the integer
    /// ratio and the high-band CP, and re-deriving the low-band CP so the
    /// velocity fusion constraint still holds.
    pub fn with_low_spacing(&self, low_spacing_hz: f64) -> Result<Self, ConfigError> {
        let ratio = self.spacing_ratio()? as f64;
        let mut cfg = *self;
        cfg.low.spacing_hz = low_spacing_hz;
        cfg.high.spacing_hz = ratio * low_spacing_hz;
        cfg.low.cp_s = matched_low_cp(&cfg.low, &cfg.high);
        if cfg.low.cp_s < 0.0 {
            return Err(ConfigError::InvalidBand {
                band: BandId::Low,
                reason: format!(
                    "no non-negative CP satisfies T_low*fc_low == T_high*fc_high at spacing {low_spacing_hz}"
                ),
            });
        }
        cfg.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Low-band CP that makes `T_low fc_low == T_high fc_high`.
pub fn matched_low_cp(low: &BandConfig, high: &BandConfig) -> f64 {
    high.symbol_duration() * high.carrier_hz / low.carrier_hz - 1.0 / low.spacing_hz
}

/// The reference experiment: 5.9 GHz / 24 GHz, N = 512, M = 64, K = Q = 4,
/// 30 kHz / 120 kHz spacing, staggered pilots.
///
/// The high-band CP is the 1.33 us minimum (T_high = 9.663 us) and the low-band
/// CP is solved from the velocity fusion constraint (T_low = 39.31 us).
pub fn make_table3_config() -> CaConfig {
    let high = BandConfig {
        carrier_hz: 24e9,
        spacing_hz: 120e3,
        subcarriers: 512,
        symbols: 64,
        cp_s: TABLE3_MIN_CP,
        pilot: PilotPattern::Block { interval: 4 },
    };
    let mut low = BandConfig {
        carrier_hz: 5.9e9,
        spacing_hz: 30e3,
        subcarriers: 512,
        symbols: 64,
        cp_s: 0.0,
        pilot: PilotPattern::Comb { interval: 4 },
    };
    low.cp_s = matched_low_cp(&low, &high);
    CaConfig {
        scheme: Scheme::Ca1,
        speed_of_light: ROUND_SPEED_OF_LIGHT,
        low,
        high,
    }
}

/// Reference numerology under another scheme (K = Q = 4 throughout).
pub fn make_table3_config_for(scheme: Scheme) -> CaConfig {
    make_table3_config().with_scheme(scheme, 4, 4)
}
