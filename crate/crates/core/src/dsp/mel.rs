//! Mel scale conversions and triangular filterbank construction (HTK-style).

use ndarray::Array2;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank of shape (n_mels, n_bins) for a real DFT with
/// `n_bins` bins over [0, sample_rate/2].
pub fn mel_filterbank(
    n_mels: usize,
    n_bins: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Array2<f64> {
    assert!(n_mels >= 1 && n_bins >= 3);
    assert!(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate as f64 / 2.0 + 1e-9);
    let mel_lo = hz_to_mel(fmin);
    let mel_hi = hz_to_mel(fmax);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    // Bin k of an L-point DFT sits at k * rate / L and the real spectrum has
    // L/2 + 1 bins, so the bin spacing follows from n_bins.
    let frame_len = 2 * (n_bins - 1);
    let bin_hz = sample_rate as f64 / frame_len as f64;
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            fb[[m, k]] = w;
        }
    }
    fb
}
