//! Toy autoencoder: a strided analysis convolution (waveform -> 32-channel
//! latent at one frame per 256 samples) and a sub-pixel synthesis convolution
//! back to the waveform, with a tanh output stage. Both are initialized as a
//! windowed in-phase/quadrature filterbank over the synthesizer's band
//! centers and then trained.

use ndarray::{Array1, Array2};

use crate::nn::Conv1d;
use crate::seed;

use super::{LatentCode, ModelError, FRAME_HOP, LATENT_CHANNELS};

/// Band centers covered by the I/Q channel pairs: the pitch band plus the
/// two formant grids.
pub const BAND_CENTERS: [f64; 12] = [
    110.0, 437.5, 562.5, 687.5, 812.5, 937.5, 1312.5, 1625.0, 1937.5, 2250.0, 2562.5, 2875.0,
];

const ENC_KERNEL: usize = 512;
const DEC_TAPS: usize = 6;

#[derive(Clone, Debug)]
pub struct Encoder {
    pub conv: Conv1d,
}

impl Encoder {
    pub fn init(master_seed: u64) -> Self {
        let mut rng = seed::rng(master_seed, "encoder-init");
        let mut conv = Conv1d::new(1, LATENT_CHANNELS, ENC_KERNEL, FRAME_HOP, &mut rng);
        conv.w.mapv_inplace(|v| v * 0.05);
        conv.b.fill(0.0);
        let center = (ENC_KERNEL - 1) as f64 / 2.0;
        let rate = crate::CANONICAL_RATE as f64;
        let window: Vec<f64> = (0..ENC_KERNEL)
            .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / (ENC_KERNEL - 1) as f64).cos())
            .collect();
        let gain = 2.0 / window.iter().sum::<f64>();
        for (band, &freq) in BAND_CENTERS.iter().enumerate() {
            for n in 0..ENC_KERNEL {
                let phase = std::f64::consts::TAU * freq * (n as f64 - center) / rate;
                conv.w[[2 * band, n]] = gain * window[n] * phase.cos();
                conv.w[[2 * band + 1, n]] = -gain * window[n] * phase.sin();
            }
        }
        Encoder { conv }
    }

    pub fn encode(&self, samples: &[f64]) -> Result<LatentCode, ModelError> {
        if samples.is_empty() {
            return Err(ModelError::ShapeError(
                "cannot encode an empty clip".into(),
            ));
        }
        let x = Array2::from_shape_vec((1, samples.len()), samples.to_vec())
            .expect("row vector");
        Ok(LatentCode::new(self.conv.forward(&x)))
    }
}

pub struct DecoderCache {
    z: Array2<f64>,
    audio: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub conv: Conv1d,
}

impl Decoder {
    pub fn init(master_seed: u64) -> Self {
        let mut rng = seed::rng(master_seed, "decoder-init");
        let mut conv = Conv1d::new(LATENT_CHANNELS, FRAME_HOP, DEC_TAPS, 1, &mut rng);
        conv.w.mapv_inplace(|v| v * 0.02);
        conv.b.fill(0.0);
        let rate = crate::CANONICAL_RATE as f64;
        // Tap j reads latent frame t-2+j (same padding); a triangular window
        // spanning two frames sums to one across overlaps.
        for (band, &freq) in BAND_CENTERS.iter().enumerate() {
            for o in 0..FRAME_HOP {
                for j in 0..DEC_TAPS {
                    let delta = (2.0 - j as f64) * FRAME_HOP as f64 + o as f64 - 127.5;
                    let tri = (1.0 - delta.abs() / FRAME_HOP as f64).max(0.0);
                    let phase = std::f64::consts::TAU * freq * delta / rate;
                    conv.w[[o, (2 * band) * DEC_TAPS + j]] = tri * phase.cos();
                    conv.w[[o, (2 * band + 1) * DEC_TAPS + j]] = -tri * phase.sin();
                }
            }
        }
        Decoder { conv }
    }

    fn check(&self, z: &LatentCode) -> Result<(), ModelError> {
        if z.channels() != self.conv.in_ch {
            return Err(ModelError::ShapeError(format!(
                "latent has {} channels, decoder expects {}",
                z.channels(),
                self.conv.in_ch
            )));
        }
        if z.frames() == 0 {
            return Err(ModelError::ShapeError("latent has no frames".into()));
        }
        if !z.is_finite() {
            return Err(ModelError::ShapeError("latent has non-finite values".into()));
        }
        Ok(())
    }

    pub fn decode(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        Ok(self.decode_cached(z)?.0)
    }

    /// Decode and keep what the backward pass needs.
    pub fn decode_cached(&self, z: &LatentCode) -> Result<(Vec<f64>, DecoderCache), ModelError> {
        self.check(z)?;
        let frames = z.frames();
        let pre = self.conv.forward(&z.values);
        let mut audio = vec![0.0; frames * FRAME_HOP];
        for t in 0..frames {
            for o in 0..FRAME_HOP {
                audio[t * FRAME_HOP + o] = pre[[o, t]].tanh();
            }
        }
        Ok((
            audio.clone(),
            DecoderCache {
                z: z.values.clone(),
                audio,
            },
        ))
    }

    /// Gradient of a scalar loss with respect to the latent, given the
    /// gradient with respect to the decoded samples. Optionally accumulates
    /// parameter gradients.
    pub fn backward(
        &self,
        cache: &DecoderCache,
        gaudio: &[f64],
        param_grads: Option<(&mut Array2<f64>, &mut Array1<f64>)>,
    ) -> Array2<f64> {
        assert_eq!(gaudio.len(), cache.audio.len(), "audio grad length");
        let frames = cache.z.ncols();
        let mut gpre = Array2::zeros((FRAME_HOP, frames));
        for t in 0..frames {
            for o in 0..FRAME_HOP {
                let y = cache.audio[t * FRAME_HOP + o];
                gpre[[o, t]] = gaudio[t * FRAME_HOP + o] * (1.0 - y * y);
            }
        }
        self.conv.backward(&cache.z, &gpre, param_grads)
    }
}
