//! Eavesdropper-side countermeasures: waveform defenses, temporal-dependency
//! detection, and latent-space reconstruction variants.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::dsp::{downsample_defense, local_smooth, DspError};
use crate::metrics::{self, MetricError};
use crate::models::{Asr, LatentCode, ModelBundle, ModelError, Transcription};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseKind {
    Smooth,
    Downsample,
    TdDetect,
    LatentRecon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentMode {
    Recon,
    LsLs,
    LsRn,
}

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("defense kind {kind:?} cannot be used with {op}")]
    WrongKind { kind: DefenseKind, op: &'static str },
    #[error("invalid defense config: {0}")]
    InvalidConfig(String),
    #[error("clip too short: the prefix needs {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// One defense setting; only the fields for the selected kind are read.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    /// Smoothing half-width (smooth).
    pub h: usize,
    /// Defense sample rate in Hz (downsample).
    pub dr: u32,
    /// Prefix fraction (td-detect).
    pub k: f64,
    pub latent_mode: LatentMode,
    pub latent_h: usize,
    pub latent_noise_std: f64,
    pub seed: u64,
}

impl DefenseConfig {
    pub fn smooth(h: usize) -> Self {
        DefenseConfig {
            kind: DefenseKind::Smooth,
            h,
            ..DefenseConfig::base()
        }
    }

    pub fn downsample(dr: u32) -> Self {
        DefenseConfig {
            kind: DefenseKind::Downsample,
            dr,
            ..DefenseConfig::base()
        }
    }

    pub fn td_detect(k: f64) -> Self {
        DefenseConfig {
            kind: DefenseKind::TdDetect,
            k,
            ..DefenseConfig::base()
        }
    }

    pub fn latent(mode: LatentMode, latent_h: usize, latent_noise_std: f64, seed: u64) -> Self {
        DefenseConfig {
            kind: DefenseKind::LatentRecon,
            latent_mode: mode,
            latent_h,
            latent_noise_std,
            seed,
            ..DefenseConfig::base()
        }
    }

    fn base() -> Self {
        DefenseConfig {
            kind: DefenseKind::Smooth,
            h: 1,
            dr: 14_000,
            k: 0.25,
            latent_mode: LatentMode::Recon,
            latent_h: 1,
            latent_noise_std: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DefenseError> {
        let err = |m: String| Err(DefenseError::InvalidConfig(m));
        match self.kind {
            DefenseKind::Smooth if self.h < 1 => err("smoothing half-width must be >= 1".into()),
            DefenseKind::Downsample if self.dr == 0 => err("defense rate must be positive".into()),
            DefenseKind::TdDetect if !(self.k > 0.0 && self.k < 1.0) => {
                err(format!("prefix fraction must be in (0,1), got {}", self.k))
            }
            DefenseKind::LatentRecon => match self.latent_mode {
                LatentMode::LsLs if self.latent_h < 1 => {
                    err("latent smoothing half-width must be >= 1".into())
                }
                LatentMode::LsRn if !(self.latent_noise_std >= 0.0) => {
                    err("latent noise std must be non-negative".into())
                }
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// Apply a waveform defense; length is preserved exactly.
pub fn defend(x: &AudioClip, cfg: &DefenseConfig) -> Result<AudioClip, DefenseError> {
    cfg.validate()?;
    let samples = match cfg.kind {
        DefenseKind::Smooth => local_smooth(&x.samples, cfg.h)?,
        DefenseKind::Downsample => downsample_defense(&x.samples, cfg.dr)?,
        kind => return Err(DefenseError::WrongKind { kind, op: "defend" }),
    };
    let mut out = AudioClip::new(format!("{}-defended", x.id), samples, x.sample_rate);
    out.transcript = x.transcript.clone();
    Ok(out)
}

/// Anything that turns samples into a transcription; the surrogate ASR in
/// production, scripted stubs in tests.
pub trait Transcriber {
    fn transcribe_samples(&self, samples: &[f64]) -> Transcription;
    /// Smallest input the transcriber can frame.
    fn min_samples(&self) -> usize;
}

impl Transcriber for Asr {
    fn transcribe_samples(&self, samples: &[f64]) -> Transcription {
        self.transcribe(samples)
    }

    fn min_samples(&self) -> usize {
        self.frontend.frame_length
    }
}

impl Transcriber for ModelBundle {
    fn transcribe_samples(&self, samples: &[f64]) -> Transcription {
        self.transcribe(samples)
    }

    fn min_samples(&self) -> usize {
        self.asr.frontend.frame_length
    }
}

/// Temporal-dependency score: agreement between the transcription of the
/// first `k` fraction of the clip and the matching prefix of the full
/// transcription. 1 means consistent (likely benign), 0 means none of it
/// held up.
pub fn td_score<T: Transcriber + ?Sized>(
    x: &AudioClip,
    k: f64,
    asr: &T,
) -> Result<f64, DefenseError> {
    if !(k > 0.0 && k < 1.0) {
        return Err(DefenseError::InvalidConfig(format!(
            "prefix fraction must be in (0,1), got {k}"
        )));
    }
    let prefix_len = (k * x.samples.len() as f64).floor() as usize;
    let needed = asr.min_samples();
    if prefix_len < needed {
        return Err(DefenseError::TooShort {
            needed,
            got: prefix_len,
        });
    }
    let t_prefix = asr.transcribe_samples(&x.samples[..prefix_len]).text;
    let t_full = asr.transcribe_samples(&x.samples).text;
    let reference: String = t_full.chars().take(t_prefix.chars().count()).collect();
    if reference.is_empty() {
        // Vacuous agreement when the prefix heard nothing; zero agreement
        // when the prefix heard something the full pass did not.
        return Ok(if t_prefix.is_empty() { 1.0 } else { 0.0 });
    }
    let cer = metrics::cer(&reference, &t_prefix, &metrics::MetricConfig::default())?;
    Ok((1.0 - cer / 100.0).max(0.0))
}

/// Score both sets and report AUC with benign as the positive class.
pub fn td_evaluate<T: Transcriber + ?Sized>(
    benign: &[AudioClip],
    adversarial: &[AudioClip],
    k: f64,
    asr: &T,
) -> Result<f64, DefenseError> {
    if benign.is_empty() || adversarial.is_empty() {
        return Err(DefenseError::InvalidConfig(
            "td evaluation needs both benign and adversarial clips".into(),
        ));
    }
    let mut scores = Vec::with_capacity(benign.len() + adversarial.len());
    let mut labels = Vec::with_capacity(scores.capacity());
    for clip in benign {
        scores.push(td_score(clip, k, asr)?);
        labels.push(true);
    }
    for clip in adversarial {
        scores.push(td_score(clip, k, asr)?);
        labels.push(false);
    }
    Ok(metrics::auc(&scores, &labels)?)
}

/// Latent-space countermeasure: re-encode the (possibly protected) clip and
/// decode it back, optionally smoothing the latent along frames or adding
/// seeded Gaussian latent noise first.
pub fn latent_countermeasure(
    x_adv: &AudioClip,
    cfg: &DefenseConfig,
    bundle: &ModelBundle,
) -> Result<AudioClip, DefenseError> {
    if cfg.kind != DefenseKind::LatentRecon {
        return Err(DefenseError::WrongKind {
            kind: cfg.kind,
            op: "latent_countermeasure",
        });
    }
    cfg.validate()?;
    let mut z = bundle.encode(&x_adv.samples)?;
    match cfg.latent_mode {
        LatentMode::Recon => {}
        LatentMode::LsLs => {
            let frames = z.frames();
            for mut row in z.values.rows_mut() {
                let smoothed = local_smooth(row.as_slice().expect("contiguous row"), cfg.latent_h)?;
                for (f, v) in smoothed.into_iter().enumerate() {
                    row[f] = v;
                }
                debug_assert_eq!(row.len(), frames);
            }
        }
        LatentMode::LsRn => {
            // std = 0 stays bit-identical to plain reconstruction.
            if cfg.latent_noise_std > 0.0 {
                let mut rng = seed::rng(cfg.seed, "latent-noise");
                let normal = Normal::new(0.0, cfg.latent_noise_std).expect("valid std");
                z.values.mapv_inplace(|v| v + normal.sample(&mut rng));
            }
        }
    }
    let mut samples = bundle.decode(&LatentCode::new(z.values))?;
    samples.truncate(x_adv.samples.len());
    let mut out = AudioClip::new(format!("{}-latent", x_adv.id), samples, x_adv.sample_rate);
    out.transcript = x_adv.transcript.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BundleMeta, Decoder, Encoder, ToyTts, FRAME_HOP, LATENT_CHANNELS};
    use crate::CANONICAL_RATE;

    fn stub_bundle() -> ModelBundle {
        ModelBundle {
            meta: BundleMeta {
                encoder_id: "toy-enc".into(),
                decoder_id: "toy-dec".into(),
                asr_id: "toy-asr".into(),
                tts_id: "toy-tts".into(),
                latent_channels: LATENT_CHANNELS,
                frame_hop: FRAME_HOP,
                seed: 13,
                ae_val_rel_l2: 0.0,
                asr_train_exact: 0.0,
                tts_round_trip: 0.0,
            },
            encoder: Encoder::init(13),
            decoder: Decoder::init(13),
            asr: Asr::init(13),
            tts: ToyTts::new(),
        }
    }

    fn tone(freq: f64, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|n| 0.4 * (std::f64::consts::TAU * freq * n as f64 / 16_000.0).sin())
            .collect();
        AudioClip::new("tone", samples, CANONICAL_RATE)
    }

    #[test]
    fn smooth_on_constant_signal_is_identity() {
        let clip = AudioClip::new("c", vec![0.25; 512], CANONICAL_RATE);
        let out = defend(&clip, &DefenseConfig::smooth(1)).unwrap();
        assert_eq!(out.samples, clip.samples);
        assert_eq!(out.len(), clip.len());
    }

    #[test]
    fn downsample_round_trips_a_low_tone() {
        let clip = tone(2000.0, 8000);
        let out = defend(&clip, &DefenseConfig::downsample(10_000)).unwrap();
        assert_eq!(out.len(), clip.len());
        let num: f64 = clip
            .samples
            .iter()
            .zip(&out.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = clip.samples.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() < 1e-2, "rel l2 {}", (num / den).sqrt());
    }

    #[test]
    fn defend_rejects_non_waveform_kinds() {
        let clip = tone(500.0, 2048);
        assert!(matches!(
            defend(&clip, &DefenseConfig::td_detect(0.25)),
            Err(DefenseError::WrongKind { op: "defend", .. })
        ));
        assert!(matches!(
            defend(&clip, &DefenseConfig::latent(LatentMode::Recon, 1, 0.0, 0)),
            Err(DefenseError::WrongKind { .. })
        ));
        assert!(matches!(
            defend(&clip, &DefenseConfig::smooth(0)),
            Err(DefenseError::InvalidConfig(_))
        ));
    }

    /// Scripted transcriber: prefix calls (shorter input) and full calls
    /// return fixed strings.
    struct Scripted {
        prefix: &'static str,
        full: &'static str,
        boundary: usize,
    }

    impl Transcriber for Scripted {
        fn transcribe_samples(&self, samples: &[f64]) -> Transcription {
            Transcription::new(
                if samples.len() < self.boundary {
                    self.prefix
                } else {
                    self.full
                }
                .into(),
            )
        }

        fn min_samples(&self) -> usize {
            4
        }
    }

    #[test]
    fn td_score_agreement_convention() {
        let clip = tone(500.0, 1000);
        // Perfect agreement: the prefix transcription equals the matching
        // prefix of the full transcription.
        let consistent = Scripted {
            prefix: "open",
            full: "open sesame",
            boundary: 900,
        };
        assert_eq!(td_score(&clip, 0.5, &consistent).unwrap(), 1.0);
        // Total disagreement.
        let inconsistent = Scripted {
            prefix: "zzzz",
            full: "open sesame",
            boundary: 900,
        };
        assert_eq!(td_score(&clip, 0.5, &inconsistent).unwrap(), 0.0);
        // Both empty: vacuous agreement.
        let silent = Scripted {
            prefix: "",
            full: "",
            boundary: 900,
        };
        assert_eq!(td_score(&clip, 0.5, &silent).unwrap(), 1.0);
        // Prefix hears something the full pass does not.
        let ghost = Scripted {
            prefix: "hm",
            full: "",
            boundary: 900,
        };
        assert_eq!(td_score(&clip, 0.5, &ghost).unwrap(), 0.0);
    }

    #[test]
    fn td_score_validates_inputs() {
        let clip = tone(500.0, 1000);
        let s = Scripted {
            prefix: "a",
            full: "a",
            boundary: 900,
        };
        assert!(matches!(
            td_score(&clip, 0.0, &s),
            Err(DefenseError::InvalidConfig(_))
        ));
        assert!(matches!(
            td_score(&clip, 1.0, &s),
            Err(DefenseError::InvalidConfig(_))
        ));
        let short = tone(500.0, 6);
        assert!(matches!(
            td_score(&short, 0.25, &s),
            Err(DefenseError::TooShort { needed: 4, got: 1 })
        ));
    }

    #[test]
    fn td_evaluate_separation_extremes() {
        let clips: Vec<AudioClip> = (0..4).map(|i| tone(400.0 + 50.0 * i as f64, 1000)).collect();
        // Identical sets: every pair ties, AUC is exactly one half.
        let s = Scripted {
            prefix: "open",
            full: "open sesame",
            boundary: 900,
        };
        let auc = td_evaluate(&clips, &clips, 0.5, &s).unwrap();
        assert!((auc - 0.5).abs() < 0.05);

        // Perfect separation: benign clips are longer, so the scripted
        // transcriber stays consistent on them and garbles the short ones.
        struct LengthGated;
        impl Transcriber for LengthGated {
            fn transcribe_samples(&self, samples: &[f64]) -> Transcription {
                Transcription::new(
                    match samples.len() {
                        n if n >= 2000 => "open sesame", // full pass, benign
                        n if n >= 1000 => "open",        // prefix pass, benign
                        n if n >= 500 => "xxxx yyyyyy",  // full pass, adversarial
                        _ => "open",                     // prefix pass, adversarial
                    }
                    .into(),
                )
            }

            fn min_samples(&self) -> usize {
                4
            }
        }
        let benign: Vec<AudioClip> = (0..3).map(|_| tone(400.0, 2000)).collect();
        let adversarial: Vec<AudioClip> = (0..3).map(|_| tone(800.0, 500)).collect();
        let auc = td_evaluate(&benign, &adversarial, 0.5, &LengthGated).unwrap();
        assert_eq!(auc, 1.0);

        assert!(matches!(
            td_evaluate(&[], &clips, 0.5, &s),
            Err(DefenseError::InvalidConfig(_))
        ));
    }

    #[test]
    fn latent_modes_behave() {
        let bundle = stub_bundle();
        let clip = tone(687.5, 4096);
        let recon =
            latent_countermeasure(&clip, &DefenseConfig::latent(LatentMode::Recon, 1, 0.0, 0), &bundle)
                .unwrap();
        assert_eq!(recon.len(), clip.len());
        assert_eq!(recon.sample_rate, CANONICAL_RATE);

        // Zero-noise ls-rn is bit-equal to plain reconstruction.
        let rn0 =
            latent_countermeasure(&clip, &DefenseConfig::latent(LatentMode::LsRn, 1, 0.0, 5), &bundle)
                .unwrap();
        assert_eq!(rn0.samples, recon.samples);

        // Positive noise changes the output but stays reproducible.
        let cfg_rn = DefenseConfig::latent(LatentMode::LsRn, 1, 0.5, 5);
        let rn_a = latent_countermeasure(&clip, &cfg_rn, &bundle).unwrap();
        let rn_b = latent_countermeasure(&clip, &cfg_rn, &bundle).unwrap();
        assert_eq!(rn_a.samples, rn_b.samples);
        assert_ne!(rn_a.samples, recon.samples);

        // Latent smoothing runs and differs from plain recon.
        let ls =
            latent_countermeasure(&clip, &DefenseConfig::latent(LatentMode::LsLs, 2, 0.0, 0), &bundle)
                .unwrap();
        assert_eq!(ls.len(), clip.len());
        assert_ne!(ls.samples, recon.samples);

        // Wrong kind and invalid latent_h are rejected.
        assert!(matches!(
            latent_countermeasure(&clip, &DefenseConfig::smooth(1), &bundle),
            Err(DefenseError::WrongKind { .. })
        ));
        assert!(matches!(
            latent_countermeasure(
                &clip,
                &DefenseConfig::latent(LatentMode::LsLs, 0, 0.0, 0),
                &bundle
            ),
            Err(DefenseError::InvalidConfig(_))
        ));
    }
}
