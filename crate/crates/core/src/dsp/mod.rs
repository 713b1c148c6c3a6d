//! Signal-processing primitives: smoothing and resampling defenses, RIR
//! convolution, mel/MFCC analysis, spectrograms, and kernel density
//! estimation. Everything here is pure and reentrant.

mod fourier;
mod kde;
mod mel;
mod mfcc;
mod resample;
mod rir;
mod smooth;
mod spect;

pub use fourier::{dft_matrices, hann_window};
pub use kde::{kde_density, kde_grid, silverman_bandwidth};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz};
pub use mfcc::{mfcc, MfccConfig};
pub use resample::{downsample_defense, resample};
pub use rir::{rir_convolve, Rir, RirBank};
pub(crate) use rir::{convolve_truncated, convolve_truncated_adjoint};
pub use smooth::local_smooth;
pub use spect::spectrogram;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("window half-width must be >= 1, got {0}")]
    InvalidWindow(usize),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("input must be non-empty")]
    EmptyInput,
    #[error("signal too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("values must be non-empty")]
    EmptyValues,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
}
