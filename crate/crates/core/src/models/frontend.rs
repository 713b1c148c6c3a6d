//! Log-mel front end shared by the surrogate ASR and the autoencoder's
//! spectral loss. Forward and backward are exact GEMM pipelines so the
//! composite loss stays differentiable down to the waveform.

use ndarray::{Array1, Array2};

use crate::dsp::{dft_matrices, hann_window, mel_filterbank};

use super::ModelError;

const POWER_FLOOR: f64 = 1e-5;
const LOG_OFFSET: f64 = 4.0;
const LOG_SCALE: f64 = 0.2;

#[derive(Clone, Debug)]
pub struct MelFrontend {
    pub frame_length: usize,
    pub hop: usize,
    pub n_mels: usize,
    cos: Array2<f64>,
    sin: Array2<f64>,
    window: Array1<f64>,
    mel: Array2<f64>,
}

pub struct FrontendCache {
    input_len: usize,
    re: Array2<f64>,
    im: Array2<f64>,
    mel_power: Array2<f64>,
}

impl MelFrontend {
    pub fn new(frame_length: usize, hop: usize, n_mels: usize, fmin: f64, fmax: f64) -> Self {
        let (cos, sin) = dft_matrices(frame_length);
        let n_bins = frame_length / 2 + 1;
        let mel = mel_filterbank(n_mels, n_bins, crate::CANONICAL_RATE, fmin, fmax);
        MelFrontend {
            frame_length,
            hop,
            n_mels,
            cos,
            sin,
            window: Array1::from(hann_window(frame_length)),
            mel,
        }
    }

    /// Front end used by the toy ASR: 16 ms frames, 8 ms hop, 36 mel bands
    /// over 50–4800 Hz.
    pub fn for_asr() -> Self {
        MelFrontend::new(256, 128, 36, 50.0, 4800.0)
    }

    pub fn frame_count(&self, input_len: usize) -> usize {
        if input_len < self.frame_length {
            0
        } else {
            1 + (input_len - self.frame_length) / self.hop
        }
    }

    /// (n_mels, frames) normalized log-mel features.
    pub fn forward(&self, x: &[f64]) -> Result<(Array2<f64>, FrontendCache), ModelError> {
        let frames = self.frame_count(x.len());
        if frames == 0 {
            return Err(ModelError::ShapeError(format!(
                "signal of {} samples is shorter than one {}-sample frame",
                x.len(),
                self.frame_length
            )));
        }
        let mut framed = Array2::zeros((self.frame_length, frames));
        for f in 0..frames {
            let start = f * self.hop;
            for i in 0..self.frame_length {
                framed[[i, f]] = x[start + i] * self.window[i];
            }
        }
        let re = self.cos.dot(&framed);
        let im = self.sin.dot(&framed);
        let mut power = re.clone();
        power.zip_mut_with(&im, |p, &i| *p = *p * *p + i * i);
        let mel_power = self.mel.dot(&power);
        let feat = mel_power.mapv(|p| ((p + POWER_FLOOR).ln() + LOG_OFFSET) * LOG_SCALE);
        Ok((
            feat,
            FrontendCache {
                input_len: x.len(),
                re,
                im,
                mel_power,
            },
        ))
    }

    /// Gradient of a scalar loss with respect to the input samples, given the
    /// gradient with respect to the features.
    pub fn backward(&self, cache: &FrontendCache, gfeat: &Array2<f64>) -> Vec<f64> {
        let mut gmel = gfeat.clone();
        gmel.zip_mut_with(&cache.mel_power, |g, &p| *g *= LOG_SCALE / (p + POWER_FLOOR));
        let gpower = self.mel.t().dot(&gmel);
        let mut gre = gpower.clone();
        gre.zip_mut_with(&cache.re, |g, &r| *g *= 2.0 * r);
        let mut gim = gpower;
        gim.zip_mut_with(&cache.im, |g, &i| *g *= 2.0 * i);
        let gframed = self.cos.t().dot(&gre) + self.sin.t().dot(&gim);
        let mut gx = vec![0.0; cache.input_len];
        for f in 0..gframed.ncols() {
            let start = f * self.hop;
            for i in 0..self.frame_length {
                gx[start + i] += gframed[[i, f]] * self.window[i];
            }
        }
        gx
    }
}
