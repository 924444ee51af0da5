//! Monte-Carlo RMSE sweeps, spectrum snapshots and CSV output.
//!
//! Trial `t` at SNR index `i` uses the scene seed
//! `derive_seed(master_seed, &[i, t])` for every method, so all methods see
//! the same noise realizations (common random numbers) and results do not
//! depend on thread scheduling.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{
    sigma_for_snr, simulate_band, simulate_bands, ChannelError, Target, TargetScene,
};
use crate::config::{BandId, CaConfig, ConfigError, Scheme};
use crate::crlb::{crlb_closed_form, crlb_single_band, CrlbError, CrlbInputs};
use crate::estimators::{
    band_range_estimate, band_velocity_estimate, estimate, Estimate, EstimateError,
};
use crate::rng::{derive_seed, seeded};
use crate::sparse::SolverOptions;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("{method} trial {trial} at {snr_db} dB failed: {source}")]
    Trial {
        method: Method,
        snr_db: f64,
        trial: usize,
        source: EstimateError,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An estimation pipeline: one of the aggregation schemes, or the high band
/// on its own with a block or a comb pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Scheme(Scheme),
    HighBlockOnly,
    HighCombOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Scheme(s) => s.name(),
            Method::HighBlockOnly => "high-block",
            Method::HighCombOnly => "high-comb",
        }
    }

    /// Config this method runs on, derived from a base numerology.
    pub fn config(self, base: &CaConfig) -> CaConfig {
        let (k, q) = base.pilot_intervals();
        let k = if k == 1 {
            base.spacing_ratio().unwrap_or(1)
        } else {
            k
        };
        match self {
            Method::Scheme(s) => base.with_scheme(s, k, q),
            Method::HighBlockOnly => base.with_scheme(Scheme::Ca1, k, q),
            Method::HighCombOnly => base.with_scheme(Scheme::Ca2, k, q),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "high-block" => Ok(Method::HighBlockOnly),
            "high-comb" => Ok(Method::HighCombOnly),
            other => other
                .parse::<Scheme>()
                .map(Method::Scheme)
                .map_err(|e| e.to_string()),
        }
    }
}

/// How the target is placed in each trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    Fixed,
    /// Uniform in `base +- span/2`, independently per trial.
    UniformRandom {
        range_span_m: f64,
        velocity_span_mps: f64,
    },
}

impl Placement {
    /// Random placement over one high-band bin in each dimension.
    pub fn one_bin(cfg: &CaConfig) -> Self {
        Placement::UniformRandom {
            range_span_m: cfg.range_bin_width(BandId::High),
            velocity_span_mps: cfg.velocity_bin_width(BandId::High),
        }
    }

    fn draw(&self, base: Target, seed: u64) -> Target {
        match *self {
            Placement::Fixed => base,
            Placement::UniformRandom {
                range_span_m,
                velocity_span_mps,
            } => {
                let mut rng = seeded(seed);
                let du: f64 = rng.random::<f64>() - 0.5;
                let dv: f64 = rng.random::<f64>() - 0.5;
                Target {
                    range_m: base.range_m + du * range_span_m,
                    velocity_mps: base.velocity_mps + dv * velocity_span_mps,
                    ..base
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub cfg: CaConfig,
    pub methods: Vec<Method>,
    pub target: Target,
    pub placement: Placement,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub solver: SolverOptions,
}

impl ExperimentSpec {
    /// Fixed target, 100 trials, default solver.
    pub fn new(cfg: CaConfig, methods: Vec<Method>, target: Target, snr_db: Vec<f64>) -> Self {
        ExperimentSpec {
            cfg,
            methods,
            target,
            placement: Placement::Fixed,
            snr_db,
            trials: 100,
            master_seed: 0,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: &str| Err(HarnessError::InvalidSpec(s.into()));
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.snr_db.is_empty() {
            return bad("SNR grid is empty");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite");
        }
        for m in &self.methods {
            m.config(&self.cfg).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub rmse_range: f64,
    pub rmse_velocity: f64,
    pub rcrlb_range: f64,
    pub rcrlb_velocity: f64,
    /// RMSE left by grid quantization alone: the noiseless error for a fixed
    /// target, `bin/sqrt(12)` (high-band bins) for random placement.
    pub floor_range: f64,
    pub floor_velocity: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Method-major, SNR in grid order.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn method_rows(&self, method: Method) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }
}

/// `(range_m, velocity_mps)` for one method on one scene.
pub fn run_method(
    method: Method,
    cfg: &CaConfig,
    scene: &TargetScene,
    solver: &SolverOptions,
) -> Result<(f64, f64), HarnessError> {
    match method {
        Method::Scheme(_) => {
            let (lo, hi) = simulate_bands(cfg, scene)?;
            let e = estimate(&lo, &hi, cfg, solver)?;
            Ok((e.range_m, e.velocity_mps))
        }
        Method::HighBlockOnly | Method::HighCombOnly => {
            let hi = simulate_band(cfg, BandId::High, scene)?;
            let c0 = cfg.speed_of_light;
            Ok((
                band_range_estimate(&hi, c0, solver)?.value,
                band_velocity_estimate(&hi, c0, solver)?.value,
            ))
        }
    }
}

fn rcrlb(
    method: Method,
    cfg: &CaConfig,
    target: &Target,
    snr_db: f64,
) -> Result<(f64, f64), HarnessError> {
    let h = target.gain.norm();
    let sigma = sigma_for_snr(snr_db, target.gain);
    let report = match method {
        Method::Scheme(_) => crlb_closed_form(&CrlbInputs::new(*cfg, h, sigma)?)?,
        _ => crlb_single_band(&cfg.high, h, sigma, cfg.speed_of_light)?,
    };
    Ok((report.rcrlb_range, report.rcrlb_velocity))
}

fn floors(
    spec: &ExperimentSpec,
    method: Method,
    cfg: &CaConfig,
) -> Result<(f64, f64), HarnessError> {
    match spec.placement {
        Placement::Fixed => {
            let scene = TargetScene::single(spec.target, 0.0, spec.master_seed);
            let (r, v) = run_method(method, cfg, &scene, &spec.solver)?;
            Ok((
                (r - spec.target.range_m).abs(),
                (v - spec.target.velocity_mps).abs(),
            ))
        }
        Placement::UniformRandom { .. } => {
            let s = 12f64.sqrt();
            Ok((
                cfg.range_bin_width(BandId::High) / s,
                cfg.velocity_bin_width(BandId::High) / s,
            ))
        }
    }
}

/// Runs every (method, SNR) point. Deterministic for a given spec.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult, HarnessError> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.methods.len() * spec.snr_db.len());
    for &method in &spec.methods {
        let cfg = method.config(&spec.cfg);
        let (floor_range, floor_velocity) = floors(spec, method, &cfg)?;
        for (i, &snr_db) in spec.snr_db.iter().enumerate() {
            let start = Instant::now();
            let sigma = sigma_for_snr(snr_db, spec.target.gain);
            let errors = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(spec.master_seed, &[i as u64, t as u64]);
                    let target = spec.placement.draw(spec.target, derive_seed(seed, &[2]));
                    let scene = TargetScene::single(target, sigma, seed);
                    let (r, v) =
                        run_method(method, &cfg, &scene, &spec.solver).map_err(|e| match e {
                            HarnessError::Estimate(source) => HarnessError::Trial {
                                method,
                                snr_db,
                                trial: t,
                                source,
                            },
                            other => other,
                        })?;
                    Ok((
                        (r - target.range_m).powi(2),
                        (v - target.velocity_mps).powi(2),
                    ))
                })
                .collect::<Result<Vec<(f64, f64)>, HarnessError>>()?;
            let n = spec.trials as f64;
            let (sr, sv) = errors
                .iter()
                .fold((0.0, 0.0), |(a, b), (r, v)| (a + r, b + v));
            let (rcrlb_range, rcrlb_velocity) = rcrlb(method, &cfg, &spec.target, snr_db)?;
            log::debug!("{method} {snr_db} dB done in {:?}", start.elapsed());
            rows.push(SweepRow {
                method,
                snr_db,
                trials: spec.trials,
                rmse_range: (sr / n).sqrt(),
                rmse_velocity: (sv / n).sqrt(),
                rcrlb_range,
                rcrlb_velocity,
                floor_range,
                floor_velocity,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SweepResult { rows })
}

pub const SWEEP_CSV_HEADER: &str = "method,snr_db,trials,rmse_range_m,rmse_velocity_mps,rcrlb_range_m,rcrlb_velocity_mps,floor_range_m,floor_velocity_mps";

/// Sweep table; wall time is left out so identical runs give identical bytes.
pub fn write_sweep_csv<W: Write + ?Sized>(out: &mut W, result: &SweepResult) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.method,
            r.snr_db,
            r.trials,
            r.rmse_range,
            r.rmse_velocity,
            r.rcrlb_range,
            r.rcrlb_velocity,
            r.floor_range,
            r.floor_velocity
        )?;
    }
    Ok(())
}

/// Lowest SNR (scanning up the grid) whose RMSE is within `rel` of the RMSE
/// at the highest SNR. `rows` must be sorted by SNR.
pub fn convergence_threshold(rows: &[(f64, f64)], rel: f64) -> Option<f64> {
    let floor = rows.last()?.1;
    rows.iter()
        .find(|(_, rmse)| *rmse <= floor * (1.0 + rel))
        .map(|(snr, _)| *snr)
}

/// Range and velocity estimates from one noisy realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub range: Vec<Estimate>,
    pub velocity: Vec<Estimate>,
}

pub fn snapshot_spectra(
    cfg: &CaConfig,
    target: Target,
    snr_db: f64,
    seed: u64,
    solver: &SolverOptions,
) -> Result<Snapshot, HarnessError> {
    let sigma = if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        sigma_for_snr(snr_db, target.gain)
    };
    let scene = TargetScene::single(target, sigma, seed);
    let (lo, hi) = simulate_bands(cfg, &scene)?;
    let e = estimate(&lo, &hi, cfg, solver)?;
    Ok(Snapshot {
        range: e.range,
        velocity: e.velocity,
    })
}

pub const SPECTRUM_CSV_HEADER: &str = "source,bin,value,power,peak";

/// One row per bin of each estimate's normalized spectrum. `source` is
/// `fused` for a single estimate, `low`/`high` for per-band pairs.
pub fn write_spectrum_csv<W: Write + ?Sized>(
    out: &mut W,
    estimates: &[Estimate],
) -> io::Result<()> {
    writeln!(out, "{SPECTRUM_CSV_HEADER}")?;
    for (i, e) in estimates.iter().enumerate() {
        let source = match (estimates.len(), i) {
            (1, _) => "fused",
            (_, 0) => "low",
            _ => "high",
        };
        for (b, p) in e.spectrum.values.iter().enumerate() {
            writeln!(
                out,
                "{source},{b},{:.16e},{:.16e},{}",
                e.spectrum.physical(b),
                p,
                u8::from(b == e.peak_bin)
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::make_table3_config;

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Scheme(Scheme::Ca1),
            Method::Scheme(Scheme::Ca4),
            Method::HighBlockOnly,
            Method::HighCombOnly,
        ] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ca9".parse::<Method>().is_err());
    }

    #[test]
    fn baseline_configs() {
        let cfg = make_table3_config();
        assert!(!Method::HighBlockOnly.config(&cfg).high.pilot.is_comb());
        assert!(Method::HighCombOnly.config(&cfg).high.pilot.is_comb());
        assert_eq!(Method::HighCombOnly.config(&cfg).high.pilot.interval(), 4);
    }

    #[test]
    fn noiseless_on_grid_rmse_is_zero() {
        let cfg = make_table3_config();
        let t = Target::new(
            10.0 * cfg.range_bin_width(BandId::High),
            2.0 * cfg.velocity_bin_width(BandId::High),
        );
        let mut spec = ExperimentSpec::new(cfg, vec![Method::Scheme(Scheme::Ca1)], t, vec![400.0]);
        spec.trials = 3;
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert!(res.rows[0].rmse_range < 1e-12);
        assert!(res.rows[0].rmse_velocity < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let cfg = make_table3_config();
        let mut spec = ExperimentSpec::new(
            cfg,
            vec![Method::Scheme(Scheme::Ca1)],
            Target::new(1.0, 1.0),
            vec![],
        );
        assert!(matches!(
            run_sweep(&spec),
            Err(HarnessError::InvalidSpec(_))
        ));
        spec.snr_db = vec![0.0];
        spec.trials = 0;
        assert!(matches!(
            run_sweep(&spec),
            Err(HarnessError::InvalidSpec(_))
        ));
    }

    #[test]
    fn threshold_scan() {
        let rows = [
            (-20.0, 50.0),
            (-15.0, 3.0),
            (-10.0, 1.05),
            (-5.0, 1.2),
            (0.0, 1.0),
        ];
        assert_eq!(convergence_threshold(&rows, 0.1), Some(-10.0));
        assert_eq!(convergence_threshold(&[], 0.1), None);
    }

    #[test]
    fn random_placement_stays_within_span() {
        let cfg = make_table3_config();
        let p = Placement::one_bin(&cfg);
        let base = Target::new(117.0, 30.0);
        for s in 0..100 {
            let t = p.draw(base, s);
            assert!((t.range_m - 117.0).abs() <= 0.5 * cfg.range_bin_width(BandId::High));
            assert!((t.velocity_mps - 30.0).abs() <= 0.5 * cfg.velocity_bin_width(BandId::High));
        }
    }
}
