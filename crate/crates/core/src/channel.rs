//! Point-target delay/Doppler channel on the post-FFT symbol grid.
//!
//! For a pilot at subcarrier `n`, symbol `m` the channel-information entry is
//!
//! ```text
//! z(n, m) = sum_t h_t exp(-j 2 pi n df 2R_t/c0) exp(+j 2 pi m T 2 v_t fc/c0) + w(n, m)/d_tx(n, m)
//! ```
//!
//! i.e. the received symbol already divided by the known transmit pilot.
//! Non-pilot entries are zero.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{BandConfig, BandId, CaConfig};
use crate::grid::{generate_tx_grid, TxGrid};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("scene has no targets")]
    EmptyScene,
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("noise sigma must be finite and >= 0, got {0}")]
    InvalidNoise(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub range_m: f64,
    /// Radial velocity, positive when closing (m/s).
    pub velocity_mps: f64,
    pub gain: Complex64,
}

impl Target {
    pub fn new(range_m: f64, velocity_mps: f64) -> Self {
        Target {
            range_m,
            velocity_mps,
            gain: Complex64::new(1.0, 0.0),
        }
    }

    pub fn with_gain(mut self, gain: Complex64) -> Self {
        self.gain = gain;
        self
    }

    fn check(&self) -> Result<(), ChannelError> {
        if !(self.range_m.is_finite() && self.range_m >= 0.0) {
            return Err(ChannelError::InvalidTarget(format!(
                "range must be finite and >= 0, got {}",
                self.range_m
            )));
        }
        if !self.velocity_mps.is_finite() {
            return Err(ChannelError::InvalidTarget("velocity not finite".into()));
        }
        if !(self.gain.re.is_finite() && self.gain.im.is_finite()) || self.gain.norm() == 0.0 {
            return Err(ChannelError::InvalidTarget(format!(
                "gain must be finite and nonzero, got {}",
                self.gain
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetScene {
    pub targets: Vec<Target>,
    /// Standard deviation of the circular complex noise per resource element.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl TargetScene {
    pub fn single(target: Target, noise_sigma: f64, seed: u64) -> Self {
        TargetScene {
            targets: vec![target],
            noise_sigma,
            seed,
        }
    }
}

/// Received-over-transmitted symbol ratios for one band.
#[derive(Debug, Clone)]
pub struct ChannelInfoMatrix {
    pub values: Array2<Complex64>,
    pub mask: Array2<bool>,
    pub band: BandConfig,
}

impl ChannelInfoMatrix {
    pub fn scaled(&self, factor: Complex64) -> Self {
        ChannelInfoMatrix {
            values: self.values.mapv(|v| v * factor),
            mask: self.mask.clone(),
            band: self.band,
        }
    }
}

/// Noise standard deviation giving `|gain|^2 / sigma^2 = 10^(snr_db/10)`.
pub fn sigma_for_snr(snr_db: f64, gain: Complex64) -> f64 {
    gain.norm() * 10f64.powf(-snr_db / 20.0)
}

/// Doppler phase advance per symbol, in cycles, for one band.
pub fn doppler_cycles_per_symbol(band: &BandConfig, velocity_mps: f64, c0: f64) -> f64 {
    band.symbol_duration() * 2.0 * velocity_mps * band.carrier_hz / c0
}

pub fn simulate_channel_info(
    tx: &TxGrid,
    scene: &TargetScene,
    c0: f64,
) -> Result<ChannelInfoMatrix, ChannelError> {
    if scene.targets.is_empty() {
        return Err(ChannelError::EmptyScene);
    }
    if !(scene.noise_sigma.is_finite() && scene.noise_sigma >= 0.0) {
        return Err(ChannelError::InvalidNoise(scene.noise_sigma));
    }
    let band = &tx.band;
    let (n_sub, n_sym) = (band.subcarriers, band.symbols);

    // Per-target phase laws, precomputed along each axis.
    let mut range_laws = Vec::with_capacity(scene.targets.len());
    let mut doppler_laws = Vec::with_capacity(scene.targets.len());
    for t in &scene.targets {
        t.check()?;
        let cycles = doppler_cycles_per_symbol(band, t.velocity_mps, c0);
        if cycles.abs() >= 0.5 {
            log::warn!(
                "target velocity {} m/s aliases in a band at {} Hz ({cycles:.3} cycles/symbol)",
                t.velocity_mps,
                band.carrier_hz
            );
        }
        let delay = 2.0 * t.range_m / c0;
        range_laws.push(
            (0..n_sub)
                .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * band.spacing_hz * delay))
                .collect::<Vec<_>>(),
        );
        doppler_laws.push(
            (0..n_sym)
                .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 * cycles))
                .collect::<Vec<_>>(),
        );
    }

    let mut rng = seeded(scene.seed);
    let component = Normal::new(0.0, scene.noise_sigma / 2f64.sqrt())
        .map_err(|_| ChannelError::InvalidNoise(scene.noise_sigma))?;
    let mut values = Array2::zeros((n_sub, n_sym));
    // Noise is drawn in a fixed (m, n) order over pilot positions only.
    for m in 0..n_sym {
        for n in 0..n_sub {
            if !tx.mask[(n, m)] {
                continue;
            }
            let mut z = Complex64::new(0.0, 0.0);
            for (i, t) in scene.targets.iter().enumerate() {
                z += t.gain * range_laws[i][n] * doppler_laws[i][m];
            }
            if scene.noise_sigma > 0.0 {
                let w = Complex64::new(component.sample(&mut rng), component.sample(&mut rng));
                z += w / tx.symbols[(n, m)];
            }
            values[(n, m)] = z;
        }
    }
    Ok(ChannelInfoMatrix {
        values,
        mask: tx.mask.clone(),
        band: *band,
    })
}

/// Simulates both bands of `cfg` for one scene. Transmit symbols and noise
/// for each band use seeds derived from `scene.seed`.
pub fn simulate_bands(
    cfg: &CaConfig,
    scene: &TargetScene,
) -> Result<(ChannelInfoMatrix, ChannelInfoMatrix), ChannelError> {
    Ok((
        simulate_band(cfg, BandId::Low, scene)?,
        simulate_band(cfg, BandId::High, scene)?,
    ))
}

pub fn simulate_band(
    cfg: &CaConfig,
    id: BandId,
    scene: &TargetScene,
) -> Result<ChannelInfoMatrix, ChannelError> {
    let tag = match id {
        BandId::Low => 0,
        BandId::High => 1,
    };
    let tx = generate_tx_grid(cfg.band(id), derive_seed(scene.seed, &[tag, 0]));
    let band_scene = TargetScene {
        seed: derive_seed(scene.seed, &[tag, 1]),
        ..scene.clone()
    };
    simulate_channel_info(&tx, &band_scene, cfg.speed_of_light)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{make_table3_config, PilotPattern};

    #[test]
    fn zero_target_gives_unit_pilots() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.low, 1);
        let scene = TargetScene::single(Target::new(0.0, 0.0), 0.0, 1);
        let d = simulate_channel_info(&tx, &scene, cfg.speed_of_light).unwrap();
        for ((n, m), v) in d.values.indexed_iter() {
            if d.mask[(n, m)] {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            } else {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn noiseless_comb_has_gain_modulus() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.low, 2);
        let h = Complex64::new(0.3, -1.2);
        let scene = TargetScene::single(Target::new(117.0, 30.0).with_gain(h), 0.0, 2);
        let d = simulate_channel_info(&tx, &scene, cfg.speed_of_light).unwrap();
        for ((n, m), v) in d.values.indexed_iter() {
            if d.mask[(n, m)] {
                assert!((v.norm() - h.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn high_band_range_phase_step() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.high, 3);
        let scene = TargetScene::single(Target::new(117.0, 30.0), 0.0, 3);
        let d = simulate_channel_info(&tx, &scene, cfg.speed_of_light).unwrap();
        let step = (d.values[(1, 0)] / d.values[(0, 0)]).arg();
        let expected = -2.0 * PI * 120e3 * 2.0 * 117.0 / 3e8;
        let wrapped = (expected + PI).rem_euclid(2.0 * PI) - PI;
        assert!((step - wrapped).abs() < 1e-9);
        // -0.5881 at 117 m; -0.5890 is the value at the 48-bin range 117.1875 m.
        assert!((wrapped - (-0.5890)).abs() < 1e-3);
    }

    #[test]
    fn noiseless_single_target_is_rank_one() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.high, 4);
        let scene = TargetScene::single(
            Target::new(53.2, -12.0).with_gain(Complex64::new(0.7, 0.2)),
            0.0,
            4,
        );
        let d = simulate_channel_info(&tx, &scene, cfg.speed_of_light).unwrap();
        let cols: Vec<usize> = (0..64).step_by(4).collect();
        for n in (0..511).step_by(37) {
            for w in cols.windows(2) {
                let (a, b) = (w[0], w[1]);
                let minor = d.values[(n, a)] * d.values[(n + 1, b)]
                    - d.values[(n, b)] * d.values[(n + 1, a)];
                assert!(minor.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn noise_is_reproducible_and_seed_dependent() {
        let cfg = make_table3_config();
        let scene = TargetScene::single(Target::new(10.0, 1.0), 0.5, 11);
        let (a, _) = simulate_bands(&cfg, &scene).unwrap();
        let (b, _) = simulate_bands(&cfg, &scene).unwrap();
        assert_eq!(a.values, b.values);
        let other = TargetScene { seed: 12, ..scene };
        let (c, _) = simulate_bands(&cfg, &other).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn noise_variance_matches_sigma() {
        let mut band = make_table3_config().high;
        band.pilot = PilotPattern::Comb { interval: 1 };
        let tx = generate_tx_grid(&band, 5);
        let sigma = 0.8;
        let scene = TargetScene::single(Target::new(0.0, 0.0), sigma, 5);
        let d = simulate_channel_info(&tx, &scene, 3e8).unwrap();
        let n = d.values.len() as f64;
        let var = d.values.iter().map(|v| (v - 1.0).norm_sqr()).sum::<f64>() / n;
        assert!((var - sigma * sigma).abs() < 0.03 * sigma * sigma);
    }

    #[test]
    fn empty_scene_rejected() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.low, 1);
        let scene = TargetScene {
            targets: vec![],
            noise_sigma: 0.0,
            seed: 0,
        };
        assert_eq!(
            simulate_channel_info(&tx, &scene, 3e8).unwrap_err(),
            ChannelError::EmptyScene
        );
    }

    #[test]
    fn zero_gain_rejected() {
        let cfg = make_table3_config();
        let tx = generate_tx_grid(&cfg.low, 1);
        let scene = TargetScene::single(
            Target::new(1.0, 0.0).with_gain(Complex64::new(0.0, 0.0)),
            0.0,
            0,
        );
        assert!(matches!(
            simulate_channel_info(&tx, &scene, 3e8),
            Err(ChannelError::InvalidTarget(_))
        ));
    }

    #[test]
    fn sigma_for_snr_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert!((sigma_for_snr(0.0, one) - 1.0).abs() < 1e-15);
        assert!((sigma_for_snr(10.0, one) - 10f64.powf(-0.5)).abs() < 1e-15);
        assert!((sigma_for_snr(-20.0, Complex64::new(2.0, 0.0)) - 20.0).abs() < 1e-12);
    }
}
