//! Transmit modulation-symbol grids with pilot masks.
//!
//! Grids are subcarrier-major: row `n` is a subcarrier, column `m` an OFDM
//! symbol. Pilot resource elements carry random QPSK symbols, everything else
//! is zero.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, Write};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::config::{BandConfig, PilotPattern};
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct TxGrid {
    pub symbols: Array2<Complex64>,
    pub mask: Array2<bool>,
    pub band: BandConfig,
}

impl TxGrid {
    pub fn pilot_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// `mask[(n, m)]` is true where the band transmits a pilot.
pub fn pilot_mask(band: &BandConfig) -> Array2<bool> {
    Array2::from_shape_fn((band.subcarriers, band.symbols), |(n, m)| {
        match band.pilot {
            PilotPattern::Comb { interval } => n % interval == 0,
            PilotPattern::Block { interval } => m % interval == 0,
        }
    })
}

pub fn generate_tx_grid(band: &BandConfig, seed: u64) -> TxGrid {
    let mask = pilot_mask(band);
    let mut rng = seeded(seed);
    let symbols = Array2::from_shape_fn(mask.dim(), |(n, m)| {
        if mask[(n, m)] {
            let re = if rng.random::<bool>() {
                FRAC_1_SQRT_2
            } else {
                -FRAC_1_SQRT_2
            };
            let im = if rng.random::<bool>() {
                FRAC_1_SQRT_2
            } else {
                -FRAC_1_SQRT_2
            };
            Complex64::new(re, im)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    TxGrid {
        symbols,
        mask,
        band: *band,
    }
}

/// Subcarrier and symbol indices that carry pilots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotIndexSets {
    pub subcarriers: Vec<usize>,
    pub symbols: Vec<usize>,
}

pub fn pilot_index_sets(band: &BandConfig) -> PilotIndexSets {
    match band.pilot {
        PilotPattern::Comb { interval } => PilotIndexSets {
            subcarriers: (0..band.subcarriers).step_by(interval).collect(),
            symbols: (0..band.symbols).collect(),
        },
        PilotPattern::Block { interval } => PilotIndexSets {
            subcarriers: (0..band.subcarriers).collect(),
            symbols: (0..band.symbols).step_by(interval).collect(),
        },
    }
}

/// Dumps a grid as `n,m,re,im,mask` rows.
pub fn write_grid_csv<W: Write>(
    mut out: W,
    values: &Array2<Complex64>,
    mask: &Array2<bool>,
) -> io::Result<()> {
    writeln!(out, "n,m,re,im,mask")?;
    for ((n, m), v) in values.indexed_iter() {
        writeln!(
            out,
            "{n},{m},{:.16e},{:.16e},{}",
            v.re,
            v.im,
            u8::from(mask[(n, m)])
        )?;
    }
    Ok(())
}
