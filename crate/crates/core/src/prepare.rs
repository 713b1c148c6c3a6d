//! Protection preparation: screening autoencoder candidates and the heuristic
//! search for a scaled target audio whose latent code seeds the perturbation.

use std::time::Instant;

use thiserror::Error;

use crate::audio::AudioClip;
use crate::models::{
    AudioCodec, LatentCode, MelFrontend, ModelBundle, ModelError, Transcription,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error("no viable candidate: none of {candidates} samples for {text:?} transcribed correctly at scale 1")]
    NoViableCandidate { text: String, candidates: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Knobs for the target-audio search. `use_last_ok_scale` switches from the
/// loop-exit scale (the first one that breaks transcription) to the last one
/// that still transcribed correctly; both readings of the procedure are
/// defensible, so the choice is explicit.
#[derive(Clone, Copy, Debug)]
pub struct SearchConfig {
    pub n: usize,
    pub decay: f64,
    pub seed: u64,
    pub use_last_ok_scale: bool,
    /// When set, error out if no candidate transcribes correctly even
    /// unscaled; otherwise the degenerate candidate is returned as-is.
    pub require_viable: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n: 10,
            decay: 0.9,
            seed: 0,
            use_last_ok_scale: false,
            require_viable: false,
        }
    }
}

/// The selected target: text, the winning synthesized audio, and its scaled
/// latent code.
#[derive(Clone, Debug)]
pub struct TargetSpec {
    pub target_text: String,
    pub target_audio: AudioClip,
    /// scale * encode(target_audio).
    pub target_latent: LatentCode,
    pub scale: f64,
    /// ASR loss of decode(target_latent) against the target text.
    pub search_loss: f64,
    /// Largest scale at which transcription still matched, when any did.
    pub last_ok_scale: Option<f64>,
}

impl TargetSpec {
    /// Recompute the selection loss from the stored latent; equal to
    /// `search_loss` bit-for-bit on an unmodified spec.
    pub fn recomputed_loss<S: SearchStack + ?Sized>(&self, stack: &S) -> Result<f64, PrepareError> {
        let audio = stack.decode(&self.target_latent)?;
        Ok(stack.asr_loss(&audio, &self.target_text)?)
    }
}

/// What the search needs from the model stack. `ModelBundle` is the real
/// implementation; tests script the transcription-success predicate.
pub trait SearchStack {
    fn synth(&self, text: &str, style_seed: u64) -> Result<AudioClip, ModelError>;
    fn encode(&self, samples: &[f64]) -> Result<LatentCode, ModelError>;
    fn decode(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError>;
    fn transcribe(&self, samples: &[f64]) -> Transcription;
    fn asr_loss(&self, samples: &[f64], text: &str) -> Result<f64, ModelError>;
}

impl SearchStack for ModelBundle {
    fn synth(&self, text: &str, style_seed: u64) -> Result<AudioClip, ModelError> {
        self.tts.sample(text, style_seed)
    }

    fn encode(&self, samples: &[f64]) -> Result<LatentCode, ModelError> {
        ModelBundle::encode(self, samples)
    }

    fn decode(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        ModelBundle::decode(self, z)
    }

    fn transcribe(&self, samples: &[f64]) -> Transcription {
        ModelBundle::transcribe(self, samples)
    }

    fn asr_loss(&self, samples: &[f64], text: &str) -> Result<f64, ModelError> {
        ModelBundle::asr_loss(self, samples, text)
    }
}

fn normalize(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn scale_latent(z: &LatentCode, w: f64) -> LatentCode {
    LatentCode::new(&z.values * w)
}

struct Candidate {
    clip: AudioClip,
    z_scaled: LatentCode,
    scale: f64,
    last_ok_scale: Option<f64>,
    loss: f64,
    viable: bool,
}

/// Synthesize `n` renditions of the target text, scale each latent down by
/// powers of `decay` until transcription breaks, and keep the candidate whose
/// decoded audio has the lowest ASR loss.
pub fn search_target_audio<S: SearchStack + ?Sized>(
    text: &str,
    cfg: &SearchConfig,
    stack: &S,
) -> Result<TargetSpec, PrepareError> {
    if cfg.n < 1 {
        return Err(PrepareError::InvalidConfig("n must be >= 1".into()));
    }
    if !(cfg.decay > 0.0 && cfg.decay < 1.0) {
        return Err(PrepareError::InvalidConfig(format!(
            "decay rate must be in (0,1), got {}",
            cfg.decay
        )));
    }
    let wanted = normalize(text);
    let mut candidates = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let style = seed::derive(cfg.seed, &format!("target-search:{i}"));
        let clip = stack.synth(text, style)?;
        let z = stack.encode(&clip.samples)?;
        let mut k: i32 = 0;
        loop {
            let w = cfg.decay.powi(k);
            let audio = stack.decode(&scale_latent(&z, w))?;
            if normalize(&stack.transcribe(&audio).text) == wanted {
                k += 1;
            } else {
                break;
            }
        }
        let viable = k >= 1;
        let scale = if cfg.use_last_ok_scale && viable {
            cfg.decay.powi(k - 1)
        } else {
            cfg.decay.powi(k)
        };
        let z_scaled = scale_latent(&z, scale);
        let decoded = stack.decode(&z_scaled)?;
        let loss = stack.asr_loss(&decoded, text)?;
        candidates.push(Candidate {
            clip,
            z_scaled,
            scale,
            last_ok_scale: viable.then(|| cfg.decay.powi(k - 1)),
            loss,
            viable,
        });
    }
    if cfg.require_viable && !candidates.iter().any(|c| c.viable) {
        return Err(PrepareError::NoViableCandidate {
            text: text.to_string(),
            candidates: cfg.n,
        });
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        if c.loss < candidates[best].loss {
            best = i;
        }
    }
    let chosen = candidates.swap_remove(best);
    Ok(TargetSpec {
        target_text: text.to_string(),
        target_audio: chosen.clip,
        target_latent: chosen.z_scaled,
        scale: chosen.scale,
        search_loss: chosen.loss,
        last_ok_scale: chosen.last_ok_scale,
    })
}

/// Screening outcome for one autoencoder candidate.
#[derive(Clone, Debug)]
pub struct ScreeningReport {
    pub model_id: String,
    pub param_count: usize,
    pub inference_ms: f64,
    /// Mel-spectral RMS distance between input and reconstruction; 0 is
    /// perfect.
    pub quality_proxy: f64,
    pub zero_shot: bool,
}

/// Measure encode+decode wall clock and reconstruction quality over a fixed
/// clip set. Needs at least 5 clips for the latency mean to be meaningful.
pub fn screen_autoencoder(
    codec: &dyn AudioCodec,
    eval_clips: &[AudioClip],
) -> Result<ScreeningReport, PrepareError> {
    assert!(eval_clips.len() >= 5, "screening needs >= 5 eval clips");
    let front = MelFrontend::for_asr();
    let mut total_ms = 0.0;
    let mut total_dist = 0.0;
    for clip in eval_clips {
        let t0 = Instant::now();
        let z = codec.encode_audio(&clip.samples)?;
        let mut recon = codec.decode_audio(&z)?;
        total_ms += t0.elapsed().as_secs_f64() * 1e3;
        recon.truncate(clip.samples.len());
        let (fa, _) = front.forward(&clip.samples)?;
        let (fb, _) = front.forward(&recon)?;
        let n = fa.len() as f64;
        let sq: f64 = fa.iter().zip(fb.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        total_dist += (sq / n).sqrt();
    }
    let count = eval_clips.len() as f64;
    Ok(ScreeningReport {
        model_id: codec.codec_id(),
        param_count: codec.codec_param_count(),
        inference_ms: (total_ms / count).max(1e-3),
        quality_proxy: total_dist / count,
        zero_shot: codec.codec_zero_shot(),
    })
}
