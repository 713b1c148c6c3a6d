//! Core algorithms for sotto: training universal adversarial perturbations in an
//! autoencoder's latent space against a surrogate CTC ASR, applying them in a
//! protection runtime, and evaluating protection strength, countermeasure
//! resilience, distribution fidelity, and the decoder robustness bound.
//!
//! File formats, WAV ingestion, and the command-line driver live in the
//! companion `sotto-cli` crate.

pub mod audio;
pub mod bound;
pub mod defense;
pub mod distribution;
pub mod dsp;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod optim;
pub mod prepare;
pub mod runtime;
pub mod seed;

/// Canonical processing rate in Hz. All internal processing happens here;
/// ingestion resamples to this rate.
pub const CANONICAL_RATE: u32 = 16_000;
