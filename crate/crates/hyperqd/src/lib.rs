//! Simulator and analysis toolkit for polarization × time-bin hyper-entangled
//! photon pairs from a quantum-dot biexciton–exciton cascade.
//!
//! The crate models the noisy two-photon state emitted under two-pulse,
//! two-photon resonant excitation, synthesizes the coincidence-count data an
//! experiment would record behind waveplate analyzers and unbalanced
//! Michelson interferometers, and reconstructs the state by maximum-likelihood
//! tomography with bootstrap error bars.
//!
//! Module map:
//! - [`qlin`] — complex matrices, kets, density matrices, eigensolver.
//! - [`source`] — cascade emission model and its noise channels.
//! - [`detection`] — projectors, Born-rule region probabilities, histogram
//!   synthesis and count extraction.
//! - [`tomography`] — projector sets, linear inversion, MLE, bootstrap.
//! - [`metrics`] — fidelity, concurrence, purity, subspace reports.
//! - [`runner`] — reproducible measurement campaigns and reports.

pub mod detection;
pub mod metrics;
pub mod qlin;
pub mod runner;
pub mod source;
pub mod tomography;
