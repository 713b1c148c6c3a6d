//! Band-limited resampling (windowed sinc) and the downsampling defense.

use super::DspError;
use crate::CANONICAL_RATE;

/// Taps per side of the sinc kernel.
const HALF_TAPS: usize = 48;
/// Cutoff rolloff relative to the target Nyquist; leaves room for the
/// transition band of the finite kernel.
const ROLLOFF: f64 = 0.97;

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    let pu = std::f64::consts::PI * u;
    0.42 + 0.5 * pu.cos() + 0.08 * (2.0 * pu).cos()
}

fn sinc(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        1.0
    } else {
        let pv = std::f64::consts::PI * v;
        pv.sin() / pv
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Kernel weights for one fractional offset, normalized to unit DC gain.
fn kernel_row(frac: f64, cutoff: f64) -> Vec<f64> {
    let mut row = vec![0.0; 2 * HALF_TAPS];
    let mut wsum = 0.0;
    for (j, w) in row.iter_mut().enumerate() {
        let offset = j as f64 - (HALF_TAPS as f64 - 1.0) - frac;
        *w = sinc(2.0 * cutoff * offset) * blackman(offset / HALF_TAPS as f64);
        wsum += *w;
    }
    for w in &mut row {
        *w /= wsum;
    }
    row
}

/// Resample to a new rate with a Blackman-windowed sinc kernel and reflected
/// edges. Output length is round(len * to_rate / from_rate).
pub fn resample(signal: &[f64], from_rate: u32, to_rate: u32) -> Result<Vec<f64>, DspError> {
    if from_rate == 0 || to_rate == 0 {
        return Err(DspError::InvalidRate(format!(
            "rates must be positive, got {from_rate} -> {to_rate}"
        )));
    }
    if from_rate == to_rate {
        return Ok(signal.to_vec());
    }
    let n = signal.len();
    let out_len = ((n as f64) * to_rate as f64 / from_rate as f64).round() as usize;
    if n == 0 || out_len == 0 {
        return Ok(Vec::new());
    }

    // Reflect-pad so the kernel never sees an artificial zero cliff.
    let pad = HALF_TAPS + 1;
    let mut padded = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        padded.push(signal[i.min(n - 1)]);
    }
    padded.extend_from_slice(signal);
    for i in 1..=pad {
        padded.push(signal[n - 1 - i.min(n - 1)]);
    }

    // Normalized cutoff in cycles per input sample.
    let cutoff = 0.5 * (to_rate as f64 / from_rate as f64).min(1.0) * ROLLOFF;

    // Output positions are exactly rational: t_m = m * from / to. The
    // fractional part cycles with period to/gcd, so kernel rows are cached.
    let from = from_rate as u64;
    let to = to_rate as u64;
    let period = (to / gcd(from, to)) as usize;
    let rows: Vec<Vec<f64>> = (0..period)
        .map(|m| {
            let frac = (m as u64 * from % to) as f64 / to as f64;
            kernel_row(frac, cutoff)
        })
        .collect();

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let num = m as u64 * from;
        let base = (num / to) as usize;
        let row = &rows[m % period];
        let start = base + pad - (HALF_TAPS - 1);
        let window = &padded[start..start + 2 * HALF_TAPS];
        let acc: f64 = row.iter().zip(window).map(|(w, x)| w * x).sum();
        out.push(acc);
    }
    Ok(out)
}

/// Eavesdropper downsampling defense: low-pass + decimate to `dr`, then
/// return to the canonical rate. Length is restored exactly.
pub fn downsample_defense(signal: &[f64], dr: u32) -> Result<Vec<f64>, DspError> {
    if dr == 0 || dr >= CANONICAL_RATE {
        return Err(DspError::InvalidRate(format!(
            "defense rate must lie in (0, {CANONICAL_RATE}), got {dr}"
        )));
    }
    let down = resample(signal, CANONICAL_RATE, dr)?;
    let mut up = resample(&down, dr, CANONICAL_RATE)?;
    // Round-trip length may differ by one sample.
    while up.len() < signal.len() {
        up.push(*up.last().unwrap_or(&0.0));
    }
    up.truncate(signal.len());
    Ok(up)
}
