//! Simulation of fast phase noise acting on trapped-ion quantum gates.
//!
//! The crate is organised bottom-up:
//!
//! * [`noisegen`] synthesises seedable phase traces with a brown (1/f²) base
//!   spectrum reshaped by a servo-loop error transfer function.
//! * [`spectral`] estimates one-sided PSDs (Welch) and the carrier-normalised
//!   Rabi PSD of the drive field, including dBc/Hz conversion.
//! * [`quantum`] builds carrier, blue-sideband and Mølmer-Sørensen
//!   Hamiltonians on a truncated spin ⊗ oscillator space and propagates pure
//!   states through a noisy phase trace.
//! * [`experiments`] runs seeded Monte-Carlo ensembles for each scenario and
//!   fits the scaling laws.
//! * [`cli`] parses run configurations and writes run directories with a
//!   hashed manifest.

pub mod cli;
pub mod error;
pub mod experiments;
mod fft;
pub mod noisegen;
pub mod quantum;
pub mod spectral;

pub use error::{Error, Result};
