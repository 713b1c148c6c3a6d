//! Room impulse responses: convolution augmentation and a bundled bank of
//! synthetic responses. Real RIR directories can be loaded through the cli
//! crate and resampled here.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DspError;
use crate::{seed, CANONICAL_RATE};

/// One impulse response with provenance.
#[derive(Clone, Debug)]
pub struct Rir {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_tag: String,
}

/// A non-empty collection of impulse responses at the canonical rate.
#[derive(Clone, Debug)]
pub struct RirBank {
    pub responses: Vec<Rir>,
}

impl RirBank {
    pub fn new(responses: Vec<Rir>) -> Result<Self, DspError> {
        if responses.is_empty() {
            return Err(DspError::EmptyInput);
        }
        Ok(RirBank { responses })
    }

    /// The bundled bank: exponentially decaying noise tails behind a direct
    /// impulse, peak-normalized.
    pub fn synthetic(count: usize, master_seed: u64) -> Self {
        let mut responses = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = seed::rng_indexed(master_seed, "rir", i as u64);
            let len = rng.gen_range(1280..=2400);
            let direct = rng.gen_range(8..40usize);
            let decay_secs = rng.gen_range(0.015..0.050);
            let tail_level = rng.gen_range(0.25..0.6);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let mut samples = vec![0.0; len];
            samples[direct] = 1.0;
            for (n, s) in samples.iter_mut().enumerate().skip(direct + 1) {
                let t = (n - direct) as f64 / CANONICAL_RATE as f64;
                *s += tail_level * (-t / decay_secs).exp() * normal.sample(&mut rng);
            }
            let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            for s in &mut samples {
                *s /= peak;
            }
            responses.push(Rir {
                samples,
                sample_rate: CANONICAL_RATE,
                source_tag: format!("synthetic-{i:02}"),
            });
        }
        RirBank { responses }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

/// Full linear convolution truncated to the signal length, then
/// peak-renormalized to the input's peak so augmentation keeps loudness (and
/// hence ASR-loss scale) stable.
pub fn rir_convolve(signal: &[f64], rir: &[f64]) -> Result<Vec<f64>, DspError> {
    if signal.is_empty() || rir.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let out = convolve_truncated(signal, rir);
    let in_peak = signal.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let out_peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if out_peak == 0.0 || in_peak == 0.0 {
        return Ok(vec![0.0; signal.len()]);
    }
    let scale = in_peak / out_peak;
    Ok(out.into_iter().map(|v| v * scale).collect())
}

pub(crate) fn convolve_truncated(signal: &[f64], rir: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut out = vec![0.0; n];
    for (k, &h) in rir.iter().enumerate() {
        if h == 0.0 || k >= n {
            continue;
        }
        for i in 0..n - k {
            out[i + k] += h * signal[i];
        }
    }
    out
}

/// Adjoint of `convolve_truncated` in its first argument: maps a gradient
/// with respect to the output back to one with respect to the signal.
pub(crate) fn convolve_truncated_adjoint(gout: &[f64], rir: &[f64]) -> Vec<f64> {
    let n = gout.len();
    let mut gin = vec![0.0; n];
    for (k, &h) in rir.iter().enumerate() {
        if h == 0.0 || k >= n {
            continue;
        }
        for i in 0..n - k {
            gin[i] += h * gout[i + k];
        }
    }
    gin
}
