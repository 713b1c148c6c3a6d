//! Local smoothing defense: moving average with edge-truncated windows.

use super::DspError;

/// Replace each sample by the mean of the window [i-h, i+h], truncated at the
/// signal edges. Length is preserved.
pub fn local_smooth(signal: &[f64], h: usize) -> Result<Vec<f64>, DspError> {
    if h < 1 {
        return Err(DspError::InvalidWindow(h));
    }
    if signal.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let n = signal.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n - 1);
        let sum: f64 = signal[lo..=hi].iter().sum();
        out.push(sum / (hi - lo + 1) as f64);
    }
    Ok(out)
}
