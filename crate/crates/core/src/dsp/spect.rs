//! Short-time magnitude spectrogram for reporting.

use ndarray::Array2;

use super::fourier::{dft_matrices, hann_window};
use super::DspError;

/// Hann-windowed short-time magnitude spectrum, shape (frames, bins) with
/// bins = frame_length/2 + 1. No padding: the tail shorter than one frame is
/// dropped, frames = 1 + floor((len - frame_length)/hop).
pub fn spectrogram(
    signal: &[f64],
    frame_length: usize,
    hop: usize,
) -> Result<Array2<f64>, DspError> {
    if frame_length < 2 || hop == 0 || hop > frame_length {
        return Err(DspError::InvalidWindow(hop));
    }
    if signal.len() < frame_length {
        return Err(DspError::TooShort {
            needed: frame_length,
            got: signal.len(),
        });
    }
    let frames = 1 + (signal.len() - frame_length) / hop;
    let (cos_m, sin_m) = dft_matrices(frame_length);
    let window = hann_window(frame_length);

    let mut framed = Array2::zeros((frame_length, frames));
    for f in 0..frames {
        let start = f * hop;
        for i in 0..frame_length {
            framed[[i, f]] = signal[start + i] * window[i];
        }
    }
    let re = cos_m.dot(&framed);
    let im = sin_m.dot(&framed);
    let mut mag = re;
    mag.zip_mut_with(&im, |r, &i| *r = (*r * *r + i * i).sqrt());
    Ok(mag.t().to_owned())
}
