//! Carrier-aggregated OFDM radar sensing.
//!
//! Simulates pilot-structured symbol grids on a low and a high band, applies a
//! point-target delay/Doppler channel, fuses both bands' channel-information
//! matrices into range and velocity spectra (plain Fourier processing plus
//! FISTA-based sparse recovery on partially observed rows/columns), and
//! evaluates estimator accuracy against Cramér-Rao lower bounds.

pub mod channel;
pub mod config;
pub mod crlb;
pub mod estimators;
pub mod fusion;
pub mod grid;
pub mod harness;
pub mod rng;
pub mod sparse;
