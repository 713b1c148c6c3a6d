//! Mel-frequency cepstral coefficients for distribution analysis.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::fourier::{dft_matrices, hann_window};
use super::mel::mel_filterbank;
use super::DspError;

const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub n_coeffs: usize,
    pub frame_length: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub sample_rate: u32,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            n_coeffs: 13,
            frame_length: 400,
            hop: 160,
            n_mels: 26,
            fmin: 20.0,
            fmax: 8000.0,
            sample_rate: crate::CANONICAL_RATE,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(DspError::InvalidWindow(self.n_coeffs));
        }
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(DspError::InvalidWindow(self.hop));
        }
        Ok(())
    }

    pub fn frame_count(&self, len: usize) -> Result<usize, DspError> {
        if len < self.frame_length {
            return Err(DspError::TooShort {
                needed: self.frame_length,
                got: len,
            });
        }
        Ok(1 + (len - self.frame_length) / self.hop)
    }
}

/// Orthonormal DCT-II matrix of shape (n_out, n_in).
fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n_out, n_in));
    let norm0 = (1.0 / n_in as f64).sqrt();
    let norm = (2.0 / n_in as f64).sqrt();
    for k in 0..n_out {
        for n in 0..n_in {
            let angle = std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / n_in as f64;
            m[[k, n]] = if k == 0 { norm0 } else { norm * angle.cos() };
        }
    }
    m
}

/// Standard MFCC pipeline: Hann window, power spectrum, mel filterbank, log
/// with floor, DCT-II. Returns (frames, n_coeffs).
pub fn mfcc(signal: &[f64], cfg: &MfccConfig) -> Result<Array2<f64>, DspError> {
    cfg.validate()?;
    let frames = cfg.frame_count(signal.len())?;
    let bins = cfg.frame_length / 2 + 1;
    let (cos_m, sin_m) = dft_matrices(cfg.frame_length);
    let window = hann_window(cfg.frame_length);
    let fb = mel_filterbank(cfg.n_mels, bins, cfg.sample_rate, cfg.fmin, cfg.fmax);
    let dct = dct_matrix(cfg.n_coeffs, cfg.n_mels);

    // Windowed frames as a matrix (frame_length, frames).
    let mut framed = Array2::zeros((cfg.frame_length, frames));
    for f in 0..frames {
        let start = f * cfg.hop;
        for i in 0..cfg.frame_length {
            framed[[i, f]] = signal[start + i] * window[i];
        }
    }
    let re = cos_m.dot(&framed);
    let im = sin_m.dot(&framed);
    let mut power = re;
    power.zip_mut_with(&im, |r, &i| *r = *r * *r + i * i);
    let mut logmel = fb.dot(&power);
    logmel.mapv_inplace(|v| v.max(LOG_FLOOR).ln());
    let coeffs = dct.dot(&logmel);
    Ok(coeffs.t().to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_rows_constant() {
        let cfg = MfccConfig::default();
        let out = mfcc(&vec![0.0; 16_000], &cfg).unwrap();
        assert_eq!(out.shape(), &[cfg.frame_count(16_000).unwrap(), cfg.n_coeffs]);
        let first = out.row(0).to_owned();
        for f in 1..out.nrows() {
            for c in 0..cfg.n_coeffs {
                assert!((out[[f, c]] - first[c]).abs() < 1e-9);
            }
        }
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn frame_count_formula() {
        let cfg = MfccConfig::default();
        let len = 16_000;
        let out = mfcc(&vec![0.1; len], &cfg).unwrap();
        assert_eq!(out.nrows(), 1 + (len - cfg.frame_length) / cfg.hop);
    }

    #[test]
    fn too_short_is_an_error() {
        let cfg = MfccConfig::default();
        assert!(matches!(
            mfcc(&vec![0.0; cfg.frame_length - 1], &cfg),
            Err(DspError::TooShort { .. })
        ));
    }

    #[test]
    fn noise_and_tone_are_distinct() {
        use rand::{Rng, SeedableRng};
        let cfg = MfccConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let tone: Vec<f64> = (0..16_000)
            .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect();
        let a = mfcc(&noise, &cfg).unwrap();
        let b = mfcc(&tone, &cfg).unwrap();
        let mean = |m: &Array2<f64>| {
            let mut v = vec![0.0; m.ncols()];
            for row in m.rows() {
                for (i, x) in row.iter().enumerate() {
                    v[i] += x / m.nrows() as f64;
                }
            }
            v
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let dist: f64 = ma.iter().zip(&mb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(dist > 0.0, "mean vectors should differ");
    }
}
