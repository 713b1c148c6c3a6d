//! Universal-perturbation training. The perturbation delta lives in the
//! latent space inside an l-inf ball of radius tau and is optimized against
//! the surrogate ASR with a cosine pull toward the target latent, under
//! Gaussian input diversification and optional impulse-response augmentation.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioClip;
use crate::dsp::{convolve_truncated, convolve_truncated_adjoint, RirBank};
use crate::models::{text_to_ids, LatentCode, ModelBundle, ModelError, FRAME_HOP};
use crate::prepare::TargetSpec;
use crate::runtime::{fold_tiled_gradient, tile_perturbation};
use crate::seed;

/// Latent frames spanned by a trained delta: the latent length of a 3 s clip
/// at the canonical rate.
pub const DELTA_FRAMES_3S: usize = 188;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("cosine similarity of an all-zero vector is undefined")]
    ZeroVector,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    SignPgd,
    AdamWithClip,
}

/// All the knobs of the training loop; `decay_rate` and `n_targets` are
/// forwarded to the target search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub tau: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub max_epoch: usize,
    pub max_iter: usize,
    pub decay_rate: f64,
    pub n_targets: usize,
    pub use_rir: bool,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub noise_per_example: bool,
    pub delta_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.5,
            sigma: 1.0,
            lambda: 50.0,
            alpha: 1e-3,
            batch_size: 16,
            max_epoch: 125,
            max_iter: 16,
            decay_rate: 0.9,
            n_targets: 10,
            use_rir: false,
            seed: 0,
            optimizer: OptimizerKind::SignPgd,
            noise_per_example: false,
            delta_frames: DELTA_FRAMES_3S,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let err = |m: &str| Err(OptimError::InvalidConfig(m.into()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return err("tau must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return err("sigma must be non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return err("lambda must be non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return err("alpha must be positive");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return err("decay rate must be in (0,1)");
        }
        if self.batch_size < 1 || self.max_epoch < 1 || self.max_iter < 1 {
            return err("batch size, epochs, and iterations must be >= 1");
        }
        if self.n_targets < 1 {
            return err("target search needs at least one candidate");
        }
        if self.delta_frames < 1 {
            return err("delta must span at least one frame");
        }
        Ok(())
    }
}

/// One optimizer step as seen by the trace. Losses are measured at the delta
/// the step consumed; `max_abs_delta` is measured after the update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub iter: usize,
    pub l_asr: f64,
    pub l_sim: f64,
    pub l_total: f64,
    pub max_abs_delta: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TrainRecord>,
}

impl TrainTrace {
    pub fn l_total_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.l_total).collect()
    }

    pub fn max_abs_within(&self, tau: f64) -> bool {
        self.records.iter().all(|r| r.max_abs_delta <= tau)
    }
}

/// Trailing-window means: out[i] = mean(series[i..i+window]).
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be >= 1");
    if series.len() < window {
        return Vec::new();
    }
    (0..=series.len() - window)
        .map(|i| series[i..i + window].iter().sum::<f64>() / window as f64)
        .collect()
}

/// A trained latent-space perturbation plus everything needed to apply or
/// audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationArtifact {
    pub id: String,
    pub encoder_id: String,
    pub target_text: String,
    pub tau: f64,
    pub seed: u64,
    pub frame_hop: usize,
    pub delta: Array2<f64>,
}

impl PerturbationArtifact {
    pub fn channels(&self) -> usize {
        self.delta.nrows()
    }

    pub fn frames(&self) -> usize {
        self.delta.ncols()
    }

    pub fn max_abs(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// The ball constraint and finiteness, checked on load.
    pub fn is_within_ball(&self) -> bool {
        self.delta.iter().all(|v| v.is_finite()) && self.max_abs() <= self.tau
    }
}

fn shape_of(a: &Array2<f64>) -> String {
    format!("{}x{}", a.nrows(), a.ncols())
}

/// Cosine similarity of the flattened arrays, in [-1, 1]. The training
/// objective weights the distance form `1 - cos`, so the similarity term
/// pulls delta toward the target latent.
pub fn cosine_similarity_loss(delta: &Array2<f64>, z_t: &Array2<f64>) -> Result<f64, OptimError> {
    Ok(cosine_with_grad(delta, z_t)?.0)
}

fn cosine_with_grad(
    delta: &Array2<f64>,
    z_t: &Array2<f64>,
) -> Result<(f64, Array2<f64>), OptimError> {
    if delta.dim() != z_t.dim() {
        return Err(OptimError::ShapeError(format!(
            "cosine arguments {} vs {}",
            shape_of(delta),
            shape_of(z_t)
        )));
    }
    let dot = (delta * z_t).sum();
    let na = delta.mapv(|v| v * v).sum().sqrt();
    let nb = z_t.mapv(|v| v * v).sum().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(OptimError::ZeroVector);
    }
    let cos = dot / (na * nb);
    let grad = z_t / (na * nb) - &(delta * (cos / (na * na)));
    Ok((cos, grad))
}

/// One projected sign-gradient step:
/// clip(delta - alpha * sign(grad), -tau, +tau).
pub fn pgd_step(
    delta: &Array2<f64>,
    grad: &Array2<f64>,
    alpha: f64,
    tau: f64,
) -> Result<Array2<f64>, OptimError> {
    if delta.dim() != grad.dim() {
        return Err(OptimError::ShapeError(format!(
            "pgd arguments {} vs {}",
            shape_of(delta),
            shape_of(grad)
        )));
    }
    let mut out = delta.clone();
    out.zip_mut_with(grad, |d, &g| {
        // f64::signum maps +-0.0 to +-1.0; a zero gradient must not move.
        let s = if g > 0.0 {
            1.0
        } else if g < 0.0 {
            -1.0
        } else {
            0.0
        };
        *d = (*d - alpha * s).clamp(-tau, tau);
    });
    Ok(out)
}

/// Adam on delta with the same l-inf projection after each step; the
/// alternative update rule the config switch exposes.
struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
    t: i32,
}

impl AdamState {
    fn new(shape: (usize, usize)) -> Self {
        AdamState {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            t: 0,
        }
    }

    fn step(&mut self, delta: &Array2<f64>, grad: &Array2<f64>, alpha: f64, tau: f64) -> Array2<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        self.m.zip_mut_with(grad, |m, &g| *m = B1 * *m + (1.0 - B1) * g);
        self.v.zip_mut_with(grad, |v, &g| *v = B2 * *v + (1.0 - B2) * g * g);
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        let mut out = delta.clone();
        for ((o, &m), &v) in out.iter_mut().zip(self.m.iter()).zip(self.v.iter()) {
            let step = alpha * (m / bc1) / ((v / bc2).sqrt() + EPS);
            *o = (*o - step).clamp(-tau, tau);
        }
        out
    }
}

/// Draw one delta-shaped noise array from N(0, sigma^2). For sigma = 0 the
/// result is exactly zero and the generator is left untouched, so runs with
/// different noise seeds agree bit-for-bit.
pub fn sample_noise(rng: &mut impl Rng, sigma: f64, shape: (usize, usize)) -> Array2<f64> {
    if sigma == 0.0 {
        return Array2::zeros(shape);
    }
    let normal = Normal::new(0.0, sigma).expect("valid std");
    let values: Vec<f64> = (0..shape.0 * shape.1).map(|_| normal.sample(rng)).collect();
    Array2::from_shape_vec(shape, values).expect("shape")
}

struct LossParts {
    total: f64,
    asr: f64,
    sim: f64,
}

/// Loss and gradient with respect to delta over one batch of latents.
/// `noises` holds either one shared array or one per batch element. The sim
/// term is skipped (treated as zero) when either vector is degenerate, so a
/// long run cannot abort mid-flight.
fn loss_and_grad(
    delta: &Array2<f64>,
    latents: &[Array2<f64>],
    noises: &[Array2<f64>],
    ids: &[usize],
    lambda: f64,
    z_t_tiled: &Array2<f64>,
    rir: Option<&[f64]>,
    bundle: &ModelBundle,
) -> Result<(LossParts, Array2<f64>), OptimError> {
    assert!(
        noises.len() == 1 || noises.len() == latents.len(),
        "noise count must be 1 or batch size"
    );
    for p in noises {
        if p.dim() != delta.dim() {
            return Err(OptimError::ShapeError(format!(
                "noise {} vs delta {}",
                shape_of(p),
                shape_of(delta)
            )));
        }
    }
    let b = latents.len() as f64;
    let mut grad = Array2::zeros(delta.dim());
    let mut l_asr_sum = 0.0;
    for (bi, z) in latents.iter().enumerate() {
        let noise = &noises[if noises.len() == 1 { 0 } else { bi }];
        let eff = delta + noise;
        let tiled = tile_perturbation(&eff, z.ncols());
        let zp = LatentCode::new(z + &tiled);
        let (audio, cache) = bundle.decoder.decode_cached(&zp)?;
        let (loss, gaudio) = match rir {
            Some(r) => {
                let reverbed = convolve_truncated(&audio, r);
                let (l, gconv) = bundle.asr.loss_grad_audio(&reverbed, ids)?;
                (l, convolve_truncated_adjoint(&gconv, r))
            }
            None => bundle.asr.loss_grad_audio(&audio, ids)?,
        };
        l_asr_sum += loss;
        let gz = bundle.decoder.backward(&cache, &gaudio, None);
        grad += &fold_tiled_gradient(&gz, delta.ncols());
    }
    let l_asr = l_asr_sum / b;
    grad.mapv_inplace(|v| v / b);
    // Similarity term: cosine distance 1 - cos(delta, z_t), so minimizing
    // pulls delta toward the tiled target latent.
    let (cos, gcos) = match cosine_with_grad(delta, z_t_tiled) {
        Ok(pair) => pair,
        Err(OptimError::ZeroVector) => (1.0, Array2::zeros(delta.dim())),
        Err(e) => return Err(e),
    };
    let l_sim = 1.0 - cos;
    grad.zip_mut_with(&gcos, |g, &s| *g -= lambda * s);
    Ok((
        LossParts {
            total: l_asr + lambda * l_sim,
            asr: l_asr,
            sim: l_sim,
        },
        grad,
    ))
}

/// The full objective at a given delta, without gradients:
/// (L_total, L_ASR, L_Sim) over the batch.
pub fn total_loss(
    delta: &Array2<f64>,
    batch: &[LatentCode],
    text: &str,
    target: &TargetSpec,
    noise: &Array2<f64>,
    rir: Option<&[f64]>,
    lambda: f64,
    bundle: &ModelBundle,
) -> Result<(f64, f64, f64), OptimError> {
    if batch.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    if noise.dim() != delta.dim() {
        return Err(OptimError::ShapeError(format!(
            "noise {} vs delta {}",
            shape_of(noise),
            shape_of(delta)
        )));
    }
    let ids = text_to_ids(text)?;
    let eff = delta + noise;
    let mut l_asr_sum = 0.0;
    for z in batch {
        let tiled = tile_perturbation(&eff, z.frames());
        let zp = LatentCode::new(&z.values + &tiled);
        let audio = bundle.decode(&zp)?;
        let loss = match rir {
            Some(r) => {
                let reverbed = convolve_truncated(&audio, r);
                bundle.asr.loss_grad_audio(&reverbed, &ids)?.0
            }
            None => bundle.asr.loss_grad_audio(&audio, &ids)?.0,
        };
        l_asr_sum += loss;
    }
    let l_asr = l_asr_sum / batch.len() as f64;
    let z_t_tiled = tile_perturbation(&target.target_latent.values, delta.ncols());
    let l_sim = 1.0 - cosine_similarity_loss(delta, &z_t_tiled)?;
    Ok((l_asr + lambda * l_sim, l_asr, l_sim))
}

/// Zero-pad a clip to a whole number of latent frames of at least
/// `min_samples`, then encode it.
fn encode_padded(
    bundle: &ModelBundle,
    clip: &AudioClip,
    min_samples: usize,
) -> Result<Array2<f64>, OptimError> {
    let want = clip.samples.len().max(min_samples);
    let padded_len = want.div_ceil(FRAME_HOP) * FRAME_HOP;
    let mut samples = clip.samples.clone();
    samples.resize(padded_len, 0.0);
    Ok(bundle.encode(&samples)?.values)
}

fn sample_batch(rng: &mut impl Rng, len: usize, batch_size: usize) -> Vec<usize> {
    if len >= batch_size {
        rand::seq::index::sample(rng, len, batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.gen_range(0..len)).collect()
    }
}

/// Run the full MaxEpoch x MaxIter loop: one batch per epoch, fresh noise
/// (and one impulse response, when enabled) per iteration, delta initialized
/// from the clipped tiled target latent. Always returns the final state; the
/// trace carries the diagnostics.
pub fn train(
    config: &TrainConfig,
    dataset: &[AudioClip],
    target: &TargetSpec,
    bundle: &ModelBundle,
    rir_bank: Option<&RirBank>,
) -> Result<(PerturbationArtifact, TrainTrace), OptimError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(OptimError::EmptyDataset);
    }
    let ids = text_to_ids(&target.target_text)?;
    let channels = target.target_latent.channels();
    let z_t_tiled = tile_perturbation(&target.target_latent.values, config.delta_frames);
    let mut delta = z_t_tiled.mapv(|v| v.clamp(-config.tau, config.tau));

    let default_bank;
    let bank: Option<&RirBank> = if config.use_rir {
        Some(match rir_bank {
            Some(b) => b,
            None => {
                default_bank = RirBank::synthetic(16, config.seed);
                &default_bank
            }
        })
    } else {
        None
    };

    let mut batch_rng = seed::rng(config.seed, "uap-batch");
    let mut noise_rng = seed::rng(config.seed, "uap-noise");
    let mut rir_rng = seed::rng(config.seed, "uap-rir");
    let mut adam = AdamState::new(delta.dim());
    let noise_count = if config.noise_per_example {
        config.batch_size
    } else {
        1
    };

    let mut trace = TrainTrace::default();
    trace.records.reserve(config.max_epoch * config.max_iter);
    for epoch in 1..=config.max_epoch {
        let picks = sample_batch(&mut batch_rng, dataset.len(), config.batch_size);
        let longest = picks
            .iter()
            .map(|&i| dataset[i].samples.len())
            .max()
            .unwrap_or(FRAME_HOP);
        let latents = picks
            .iter()
            .map(|&i| encode_padded(bundle, &dataset[i], longest))
            .collect::<Result<Vec<_>, _>>()?;
        for iter in 1..=config.max_iter {
            let noises: Vec<Array2<f64>> = (0..noise_count)
                .map(|_| sample_noise(&mut noise_rng, config.sigma, delta.dim()))
                .collect();
            let drawn;
            let rir: Option<&[f64]> = match bank {
                Some(b) => {
                    let pick = rir_rng.gen_range(0..b.len());
                    drawn = &b.responses[pick].samples;
                    Some(drawn)
                }
                None => None,
            };
            let (parts, grad) = loss_and_grad(
                &delta,
                &latents,
                &noises,
                &ids,
                config.lambda,
                &z_t_tiled,
                rir,
                bundle,
            )?;
            delta = match config.optimizer {
                OptimizerKind::SignPgd => pgd_step(&delta, &grad, config.alpha, config.tau)?,
                OptimizerKind::AdamWithClip => adam.step(&delta, &grad, config.alpha, config.tau),
            };
            let max_abs = delta.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            trace.records.push(TrainRecord {
                epoch,
                iter,
                l_asr: parts.asr,
                l_sim: parts.sim,
                l_total: parts.total,
                max_abs_delta: max_abs,
            });
        }
    }

    debug_assert_eq!(delta.nrows(), channels);
    let artifact = PerturbationArtifact {
        id: format!(
            "uap-{}-s{}",
            target.target_text.replace(' ', "-"),
            config.seed
        ),
        encoder_id: bundle.meta.encoder_id.clone(),
        target_text: target.target_text.clone(),
        tau: config.tau,
        seed: config.seed,
        frame_hop: FRAME_HOP,
        delta,
    };
    Ok((artifact, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Asr, BundleMeta, Decoder, Encoder, ToyTts, LATENT_CHANNELS};
    use crate::CANONICAL_RATE;
    use ndarray::array;

    fn stub_bundle() -> ModelBundle {
        ModelBundle {
            meta: BundleMeta {
                encoder_id: "toy-enc".into(),
                decoder_id: "toy-dec".into(),
                asr_id: "toy-asr".into(),
                tts_id: "toy-tts".into(),
                latent_channels: LATENT_CHANNELS,
                frame_hop: FRAME_HOP,
                seed: 11,
                ae_val_rel_l2: 0.0,
                asr_train_exact: 0.0,
                tts_round_trip: 0.0,
            },
            encoder: Encoder::init(11),
            decoder: Decoder::init(11),
            asr: Asr::init(11),
            tts: ToyTts::new(),
        }
    }

    fn tone_clip(id: &str, freq: f64, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|n| 0.3 * (std::f64::consts::TAU * freq * n as f64 / 16_000.0).sin())
            .collect();
        AudioClip::new(id, samples, CANONICAL_RATE)
    }

    fn toy_target(bundle: &ModelBundle, text: &str, frames: usize) -> TargetSpec {
        let clip = tone_clip("target", 437.5, frames * FRAME_HOP);
        let z = bundle.encode(&clip.samples).unwrap();
        TargetSpec {
            target_text: text.into(),
            target_audio: clip,
            target_latent: z,
            scale: 1.0,
            search_loss: 0.0,
            last_ok_scale: None,
        }
    }

    #[test]
    fn cosine_trivials() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert!((cosine_similarity_loss(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let neg = a.mapv(|v| -v);
        assert!((cosine_similarity_loss(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
        let e1 = array![[1.0, 0.0]];
        let e2 = array![[0.0, 1.0]];
        assert_eq!(cosine_similarity_loss(&e1, &e2).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity_loss(&e1, &Array2::zeros((1, 2))),
            Err(OptimError::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity_loss(&e1, &Array2::ones((2, 2))),
            Err(OptimError::ShapeError(_))
        ));
    }

    #[test]
    fn cosine_gradient_matches_finite_differences() {
        let mut rng = seed::rng(5, "cos-fd");
        let delta = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let z_t = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let (_, grad) = cosine_with_grad(&delta, &z_t).unwrap();
        let h = 1e-6;
        for &(r, c) in &[(0, 0), (1, 2), (2, 3)] {
            let mut plus = delta.clone();
            plus[[r, c]] += h;
            let mut minus = delta.clone();
            minus[[r, c]] -= h;
            let fd = (cosine_similarity_loss(&plus, &z_t).unwrap()
                - cosine_similarity_loss(&minus, &z_t).unwrap())
                / (2.0 * h);
            assert!(
                (fd - grad[[r, c]]).abs() < 1e-8,
                "coord ({r},{c}): fd {fd} vs {}",
                grad[[r, c]]
            );
        }
    }

    #[test]
    fn pgd_step_arithmetic() {
        let zeros = Array2::zeros((2, 2));
        // Zero gradient leaves a within-ball delta untouched and clips an
        // out-of-ball one.
        let inside = array![[0.2, -0.3], [0.0, 0.5]];
        assert_eq!(pgd_step(&inside, &zeros, 0.001, 0.5).unwrap(), inside);
        let outside = array![[0.9, -0.7], [0.1, 0.0]];
        assert_eq!(
            pgd_step(&outside, &zeros, 0.001, 0.5).unwrap(),
            array![[0.5, -0.5], [0.1, 0.0]]
        );
        // Single-step arithmetic from zero.
        let ones = Array2::ones((2, 2));
        let stepped = pgd_step(&zeros, &ones, 0.001, 0.5).unwrap();
        assert!(stepped.iter().all(|&v| v == -0.001));
        // Boundary clamp: at +tau with a negative gradient, stay at +tau.
        let at_tau = Array2::from_elem((2, 2), 0.5);
        let neg = Array2::from_elem((2, 2), -1.0);
        assert_eq!(pgd_step(&at_tau, &neg, 0.001, 0.5).unwrap(), at_tau);
        // Negative zero gradients must not move delta either.
        let neg_zero = Array2::from_elem((2, 2), -0.0);
        assert_eq!(pgd_step(&inside, &neg_zero, 0.001, 0.5).unwrap(), inside);
        assert!(matches!(
            pgd_step(&inside, &Array2::zeros((1, 2)), 0.001, 0.5),
            Err(OptimError::ShapeError(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { tau: 0.0, ..TrainConfig::default() },
            TrainConfig { sigma: -1.0, ..TrainConfig::default() },
            TrainConfig { lambda: -0.5, ..TrainConfig::default() },
            TrainConfig { alpha: 0.0, ..TrainConfig::default() },
            TrainConfig { decay_rate: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { delta_frames: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(OptimError::InvalidConfig(_))));
        }
    }

    #[test]
    fn zero_sigma_noise_ignores_the_generator() {
        let mut a = seed::rng(1, "noise-a");
        let mut b = seed::rng(2, "noise-b");
        let na = sample_noise(&mut a, 0.0, (3, 5));
        let nb = sample_noise(&mut b, 0.0, (3, 5));
        assert_eq!(na, nb);
        assert!(na.iter().all(|&v| v == 0.0));
        let drawn = sample_noise(&mut a, 1.0, (3, 5));
        assert!(drawn.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn lambda_zero_total_loss_equals_asr_loss() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 4);
        let batch: Vec<LatentCode> = [620.0, 900.0]
            .iter()
            .map(|&f| bundle.encode(&tone_clip("b", f, 2560).samples).unwrap())
            .collect();
        let delta = Array2::from_elem((LATENT_CHANNELS, 4), 0.05);
        let noise = Array2::zeros((LATENT_CHANNELS, 4));
        let (total, asr, sim) =
            total_loss(&delta, &batch, "ab", &target, &noise, None, 0.0, &bundle).unwrap();
        assert_eq!(total.to_bits(), asr.to_bits());
        assert!((0.0..=2.0).contains(&sim));
        let (with_lambda, asr2, sim2) =
            total_loss(&delta, &batch, "ab", &target, &noise, None, 50.0, &bundle).unwrap();
        assert_eq!(asr.to_bits(), asr2.to_bits());
        assert!((with_lambda - (asr2 + 50.0 * sim2)).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 4);
        let latents: Vec<Array2<f64>> = [620.0, 900.0]
            .iter()
            .map(|&f| bundle.encode(&tone_clip("b", f, 2560).samples).unwrap().values)
            .collect();
        let batch: Vec<LatentCode> = latents.iter().map(|v| LatentCode::new(v.clone())).collect();
        let ids = text_to_ids("ab").unwrap();
        let z_t_tiled = tile_perturbation(&target.target_latent.values, 4);
        let mut rng = seed::rng(9, "fd-delta");
        let delta = Array2::from_shape_fn((LATENT_CHANNELS, 4), |_| rng.gen_range(-0.2..0.2));
        let noise = Array2::zeros((LATENT_CHANNELS, 4));
        let rir = [1.0, 0.0, 0.0, 0.0, 0.4, 0.0, -0.2];
        for (lambda, rir_opt) in [(50.0, None), (5.0, Some(&rir[..]))] {
            let (_, grad) = loss_and_grad(
                &delta,
                &latents,
                std::slice::from_ref(&noise),
                &ids,
                lambda,
                &z_t_tiled,
                rir_opt,
                &bundle,
            )
            .unwrap();
            let h = 1e-5;
            let coords = [(0usize, 0usize), (3, 1), (7, 2), (12, 3), (21, 0), (31, 3)];
            for &(r, c) in &coords {
                let eval = |d: &Array2<f64>| {
                    total_loss(d, &batch, "ab", &target, &noise, rir_opt, lambda, &bundle)
                        .unwrap()
                        .0
                };
                let mut plus = delta.clone();
                plus[[r, c]] += h;
                let mut minus = delta.clone();
                minus[[r, c]] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let g = grad[[r, c]];
                let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-9);
                assert!(
                    rel < 1e-3,
                    "lambda {lambda} rir {} coord ({r},{c}): fd {fd} vs {g} (rel {rel})",
                    rir_opt.is_some()
                );
            }
        }
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            alpha: 0.01,
            batch_size: 2,
            max_epoch: 2,
            max_iter: 3,
            delta_frames: 5,
            ..TrainConfig::default()
        }
    }

    fn tiny_dataset() -> Vec<AudioClip> {
        vec![
            tone_clip("c0", 500.0, 2048),
            tone_clip("c1", 750.0, 2304),
            tone_clip("c2", 1100.0, 2560),
        ]
    }

    #[test]
    fn train_is_seeded_and_respects_the_ball() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 5);
        let cfg = tiny_config();
        let (art_a, trace_a) = train(&cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        let (art_b, trace_b) = train(&cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert_eq!(art_a.delta, art_b.delta);
        assert_eq!(trace_a, trace_b);
        assert_eq!(trace_a.records.len(), 6);
        assert_eq!(trace_a.records[0].epoch, 1);
        assert_eq!(trace_a.records[0].iter, 1);
        assert_eq!(trace_a.records[5].epoch, 2);
        assert_eq!(trace_a.records[5].iter, 3);
        assert!(trace_a.max_abs_within(cfg.tau));
        assert!(art_a.is_within_ball());
        assert_eq!(art_a.frames(), 5);
        assert_eq!(art_a.channels(), LATENT_CHANNELS);
        assert_eq!(art_a.encoder_id, "toy-enc");
        assert_eq!(art_a.target_text, "ab");

        let different_seed = TrainConfig { seed: 9, ..cfg };
        let (art_c, _) = train(&different_seed, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert_ne!(art_a.delta, art_c.delta);
    }

    #[test]
    fn lambda_zero_trace_reports_pure_asr_loss() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 5);
        let cfg = TrainConfig {
            lambda: 0.0,
            ..tiny_config()
        };
        let (_, trace) = train(&cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        for r in &trace.records {
            assert_eq!(r.l_total.to_bits(), r.l_asr.to_bits());
        }
    }

    #[test]
    fn adam_variant_and_rir_variant_run() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 5);
        let adam_cfg = TrainConfig {
            optimizer: OptimizerKind::AdamWithClip,
            ..tiny_config()
        };
        let (art, trace) = train(&adam_cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert!(art.is_within_ball());
        assert!(trace.max_abs_within(adam_cfg.tau));

        let rir_cfg = TrainConfig {
            use_rir: true,
            ..tiny_config()
        };
        let (art_r, _) = train(&rir_cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert!(art_r.is_within_ball());
        let (art_r2, _) = train(&rir_cfg, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert_eq!(art_r.delta, art_r2.delta);
    }

    #[test]
    fn per_example_noise_differs_from_shared() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 5);
        // lambda 0 so the noise path through the ASR term decides the signs.
        let shared = TrainConfig {
            lambda: 0.0,
            ..tiny_config()
        };
        let per_example = TrainConfig {
            lambda: 0.0,
            noise_per_example: true,
            ..tiny_config()
        };
        let (a, _) = train(&shared, &tiny_dataset(), &target, &bundle, None).unwrap();
        let (b, _) = train(&per_example, &tiny_dataset(), &target, &bundle, None).unwrap();
        assert_ne!(a.delta, b.delta);
    }

    #[test]
    fn moving_average_hand_trace() {
        let series = [4.0, 2.0, 6.0, 2.0];
        assert_eq!(moving_average(&series, 2), vec![3.0, 4.0, 4.0]);
        assert_eq!(moving_average(&series, 4), vec![3.5]);
        assert!(moving_average(&series[..1], 2).is_empty());
    }

    #[test]
    fn empty_dataset_rejected() {
        let bundle = stub_bundle();
        let target = toy_target(&bundle, "ab", 5);
        assert!(matches!(
            train(&tiny_config(), &[], &target, &bundle, None),
            Err(OptimError::EmptyDataset)
        ));
    }
}
