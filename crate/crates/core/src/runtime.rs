//! Applying trained perturbations: tile the latent delta over a clip's
//! frames, add, decode. Batch and chunked-streaming entry points.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::models::{LatentCode, ModelBundle, ModelError};
use crate::optim::PerturbationArtifact;
use crate::seed;
use crate::CANONICAL_RATE;

/// Crossfade length at streaming chunk joins: 10 ms at the canonical rate.
pub const CROSSFADE_SAMPLES: usize = 160;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("pool must contain at least one artifact")]
    EmptyPool,
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid chunking: {0}")]
    InvalidChunking(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Repeat `delta` along the frame axis and truncate to `target_frames`.
pub fn tile_perturbation(delta: &Array2<f64>, target_frames: usize) -> Array2<f64> {
    let frames = delta.ncols();
    assert!(frames >= 1, "delta must have at least one frame");
    assert!(target_frames >= 1, "target must have at least one frame");
    let mut out = Array2::zeros((delta.nrows(), target_frames));
    for f in 0..target_frames {
        out.column_mut(f).assign(&delta.column(f % frames));
    }
    out
}

/// Adjoint of `tile_perturbation`: fold a gradient over tiled frames back
/// onto the source frames by summing congruent columns.
pub fn fold_tiled_gradient(grad: &Array2<f64>, source_frames: usize) -> Array2<f64> {
    assert!(source_frames >= 1, "source must have at least one frame");
    let mut out = Array2::zeros((grad.nrows(), source_frames));
    for f in 0..grad.ncols() {
        let mut col = out.column_mut(f % source_frames);
        col += &grad.column(f);
    }
    out
}

/// A non-empty set of interchangeable perturbations plus the seeded selector
/// that picks one per protection call.
#[derive(Clone, Debug)]
pub struct UapPool {
    pub artifacts: Vec<PerturbationArtifact>,
    rng: ChaCha8Rng,
}

impl UapPool {
    pub fn new(artifacts: Vec<PerturbationArtifact>, selector_seed: u64) -> Result<Self, RuntimeError> {
        if artifacts.is_empty() {
            return Err(RuntimeError::EmptyPool);
        }
        let first = &artifacts[0];
        for a in &artifacts[1..] {
            if a.encoder_id != first.encoder_id {
                return Err(RuntimeError::GeometryMismatch(format!(
                    "artifact {} targets encoder {:?}, pool uses {:?}",
                    a.id, a.encoder_id, first.encoder_id
                )));
            }
            if a.channels() != first.channels() || a.frame_hop != first.frame_hop {
                return Err(RuntimeError::GeometryMismatch(format!(
                    "artifact {} has {} channels at hop {}, pool uses {} at {}",
                    a.id,
                    a.channels(),
                    a.frame_hop,
                    first.channels(),
                    first.frame_hop
                )));
            }
        }
        Ok(UapPool {
            artifacts,
            rng: seed::rng(selector_seed, "uap-select"),
        })
    }

    pub fn len(&self) -> usize {
        self.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
    }

    /// Draw the next artifact index uniformly.
    pub fn select(&mut self) -> usize {
        let n = self.artifacts.len();
        self.rng.gen_range(0..n)
    }

    fn check_bundle(&self, bundle: &ModelBundle) -> Result<(), RuntimeError> {
        let a = &self.artifacts[0];
        if a.encoder_id != bundle.meta.encoder_id {
            return Err(RuntimeError::GeometryMismatch(format!(
                "pool encoder {:?} vs bundle encoder {:?}",
                a.encoder_id, bundle.meta.encoder_id
            )));
        }
        if a.channels() != bundle.meta.latent_channels || a.frame_hop != bundle.meta.frame_hop {
            return Err(RuntimeError::GeometryMismatch(format!(
                "pool geometry {}x hop {} vs bundle {}x hop {}",
                a.channels(),
                a.frame_hop,
                bundle.meta.latent_channels,
                bundle.meta.frame_hop
            )));
        }
        Ok(())
    }
}

/// One protected clip plus which artifact produced it and how long the
/// encode+add+decode path took.
#[derive(Clone, Debug)]
pub struct ProtectionResult {
    pub protected: AudioClip,
    pub artifact_id: String,
    pub latency_ms: f64,
}

fn apply_artifact(
    samples: &[f64],
    artifact: &PerturbationArtifact,
    bundle: &ModelBundle,
) -> Result<(Vec<f64>, f64), ModelError> {
    let t0 = Instant::now();
    let z = bundle.encode(samples)?;
    let tiled = tile_perturbation(&artifact.delta, z.frames());
    let perturbed = LatentCode::new(&z.values + &tiled);
    let mut out = bundle.decode(&perturbed)?;
    let latency_ms = (t0.elapsed().as_secs_f64() * 1e3).max(1e-6);
    out.truncate(samples.len());
    Ok((out, latency_ms))
}

/// Protect one clip: pick an artifact, add its tiled delta in latent space,
/// decode back. The input clip is not modified.
pub fn protect(
    x: &AudioClip,
    pool: &mut UapPool,
    bundle: &ModelBundle,
) -> Result<ProtectionResult, RuntimeError> {
    if x.sample_rate != CANONICAL_RATE {
        return Err(RuntimeError::GeometryMismatch(format!(
            "clip {} is at {} Hz, runtime expects {} Hz",
            x.id, x.sample_rate, CANONICAL_RATE
        )));
    }
    pool.check_bundle(bundle)?;
    let idx = pool.select();
    let artifact = &pool.artifacts[idx];
    let (out, latency_ms) = apply_artifact(&x.samples, artifact, bundle)?;
    let mut protected = AudioClip::new(format!("{}-protected", x.id), out, CANONICAL_RATE);
    protected.transcript = x.transcript.clone();
    Ok(ProtectionResult {
        protected,
        artifact_id: artifact.id.clone(),
        latency_ms,
    })
}

/// Chunked streaming output: protected chunks in input order, the artifact
/// used for the whole stream, and per-chunk latency.
#[derive(Clone, Debug)]
pub struct StreamResult {
    pub chunks: Vec<Vec<f64>>,
    pub artifact_id: String,
    pub chunk_latency_ms: Vec<f64>,
}

/// Protect a stream of fixed-size chunks. One artifact is drawn for the whole
/// stream; each chunk is protected independently and a 10 ms linear
/// crossfade against the previous protected chunk's tail smooths each join.
pub fn protect_stream(
    chunks: &[Vec<f64>],
    pool: &mut UapPool,
    bundle: &ModelBundle,
) -> Result<StreamResult, RuntimeError> {
    pool.check_bundle(bundle)?;
    let idx = pool.select();
    let artifact = &pool.artifacts[idx];
    if chunks.is_empty() {
        return Ok(StreamResult {
            chunks: Vec::new(),
            artifact_id: artifact.id.clone(),
            chunk_latency_ms: Vec::new(),
        });
    }
    let size = chunks[0].len();
    if size < artifact.frame_hop {
        return Err(RuntimeError::InvalidChunking(format!(
            "chunk size {} is below one latent frame ({})",
            size, artifact.frame_hop
        )));
    }
    for (i, c) in chunks.iter().enumerate() {
        let last = i + 1 == chunks.len();
        if (!last && c.len() != size) || (last && (c.is_empty() || c.len() > size)) {
            return Err(RuntimeError::InvalidChunking(format!(
                "chunk {} has {} samples, stream uses {}",
                i,
                c.len(),
                size
            )));
        }
    }
    let mut out_chunks = Vec::with_capacity(chunks.len());
    let mut latencies = Vec::with_capacity(chunks.len());
    for (i, chunk) in chunks.iter().enumerate() {
        let (mut out, latency_ms) = apply_artifact(chunk, artifact, bundle)?;
        if i > 0 {
            let prev: &Vec<f64> = &out_chunks[i - 1];
            let fade = CROSSFADE_SAMPLES.min(out.len()).min(prev.len());
            for j in 0..fade {
                let w = j as f64 / fade as f64;
                out[j] = w * out[j] + (1.0 - w) * prev[prev.len() - fade + j];
            }
        }
        out_chunks.push(out);
        latencies.push(latency_ms);
    }
    Ok(StreamResult {
        chunks: out_chunks,
        artifact_id: artifact.id.clone(),
        chunk_latency_ms: latencies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Asr, BundleMeta, Decoder, Encoder, ToyTts, FRAME_HOP, LATENT_CHANNELS};
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
                seed: 7,
                ae_val_rel_l2: 0.0,
                asr_train_exact: 0.0,
                tts_round_trip: 0.0,
            },
            encoder: Encoder::init(7),
            decoder: Decoder::init(7),
            asr: Asr::init(7),
            tts: ToyTts::new(),
        }
    }

    fn dummy_artifact(id: &str, fill: f64) -> PerturbationArtifact {
        PerturbationArtifact {
            id: id.into(),
            encoder_id: "toy-enc".into(),
            target_text: "open sesame".into(),
            tau: 0.5,
            seed: 1,
            frame_hop: FRAME_HOP,
            delta: Array2::from_elem((LATENT_CHANNELS, 8), fill),
        }
    }

    #[test]
    fn tiling_matches_hand_trace() {
        let delta = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(tile_perturbation(&delta, 2), delta);
        let tiled = tile_perturbation(&delta, 5);
        assert_eq!(tiled.row(0).to_vec(), vec![1.0, 2.0, 1.0, 2.0, 1.0]);
        assert_eq!(tiled.row(1).to_vec(), vec![3.0, 4.0, 3.0, 4.0, 3.0]);
    }

    #[test]
    fn tiling_preserves_max_abs() {
        let mut rng = seed::rng(0, "tile-test");
        let delta = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-2.0..2.0));
        for target in [1, 2, 3, 7, 12] {
            let tiled = tile_perturbation(&delta, target);
            let m_in = delta.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let m_out = tiled.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(m_out <= m_in + 1e-15);
            if target >= 3 {
                assert_eq!(m_out, m_in);
            }
        }
    }

    #[test]
    fn fold_is_the_adjoint_of_tile() {
        let mut rng = seed::rng(1, "fold-test");
        let x = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((3, 11), |_| rng.gen_range(-1.0..1.0));
        let lhs: f64 = (&tile_perturbation(&x, 11) * &y).sum();
        let rhs: f64 = (&x * &fold_tiled_gradient(&y, 4)).sum();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn pool_rejects_empty_and_mismatched() {
        assert!(matches!(
            UapPool::new(vec![], 0),
            Err(RuntimeError::EmptyPool)
        ));
        let mut other = dummy_artifact("b", 0.1);
        other.encoder_id = "other-enc".into();
        assert!(matches!(
            UapPool::new(vec![dummy_artifact("a", 0.1), other], 0),
            Err(RuntimeError::GeometryMismatch(_))
        ));
        let mut thin = dummy_artifact("c", 0.1);
        thin.delta = Array2::zeros((LATENT_CHANNELS - 1, 8));
        assert!(matches!(
            UapPool::new(vec![dummy_artifact("a", 0.1), thin], 0),
            Err(RuntimeError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn selector_is_uniform_by_chi_square() {
        let artifacts = (0..4)
            .map(|i| dummy_artifact(&format!("a{i}"), 0.01 * i as f64))
            .collect();
        let mut pool = UapPool::new(artifacts, 99).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[pool.select()] += 1;
        }
        let expected = 2500.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.99 quantile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn single_artifact_pool_always_selects_it() {
        let mut pool = UapPool::new(vec![dummy_artifact("only", 0.05)], 3).unwrap();
        let bundle = stub_bundle();
        let clip = AudioClip::new("c", vec![0.1; 4096], CANONICAL_RATE);
        for _ in 0..5 {
            let res = protect(&clip, &mut pool, &bundle).unwrap();
            assert_eq!(res.artifact_id, "only");
        }
    }

    #[test]
    fn protect_keeps_length_rate_and_transcript() {
        let mut pool = UapPool::new(vec![dummy_artifact("a", 0.05)], 3).unwrap();
        let bundle = stub_bundle();
        let clip =
            AudioClip::new("c", vec![0.1; 5000], CANONICAL_RATE).with_transcript("hello there");
        let before = clip.clone();
        let res = protect(&clip, &mut pool, &bundle).unwrap();
        assert_eq!(clip, before);
        assert_eq!(res.protected.len(), clip.len());
        assert_eq!(res.protected.sample_rate, CANONICAL_RATE);
        assert_eq!(res.protected.id, "c-protected");
        assert_eq!(res.protected.transcript.as_deref(), Some("hello there"));
        assert!(res.latency_ms > 0.0);
    }

    #[test]
    fn protect_rejects_wrong_rate_and_wrong_bundle() {
        let mut pool = UapPool::new(vec![dummy_artifact("a", 0.05)], 3).unwrap();
        let bundle = stub_bundle();
        let wrong_rate = AudioClip::new("c", vec![0.1; 4096], 48_000);
        assert!(matches!(
            protect(&wrong_rate, &mut pool, &bundle),
            Err(RuntimeError::GeometryMismatch(_))
        ));
        let mut other = dummy_artifact("b", 0.05);
        other.encoder_id = "other-enc".into();
        let mut other_pool = UapPool::new(vec![other], 3).unwrap();
        let clip = AudioClip::new("c", vec![0.1; 4096], CANONICAL_RATE);
        assert!(matches!(
            protect(&clip, &mut other_pool, &bundle),
            Err(RuntimeError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn stream_matches_chunkwise_protection_outside_the_crossfade() {
        let bundle = stub_bundle();
        let artifact = dummy_artifact("a", 0.05);
        let chunks: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                (0..2048)
                    .map(|n| {
                        0.3 * (std::f64::consts::TAU * 500.0 * (c * 2048 + n) as f64 / 16_000.0)
                            .sin()
                    })
                    .collect()
            })
            .collect();
        let mut pool = UapPool::new(vec![artifact.clone()], 3).unwrap();
        let res = protect_stream(&chunks, &mut pool, &bundle).unwrap();
        assert_eq!(res.artifact_id, "a");
        assert_eq!(res.chunks.len(), 3);
        assert_eq!(res.chunk_latency_ms.len(), 3);
        for (i, chunk) in chunks.iter().enumerate() {
            let (solo, _) = apply_artifact(chunk, &artifact, &bundle).unwrap();
            let skip = if i == 0 { 0 } else { CROSSFADE_SAMPLES };
            assert_eq!(res.chunks[i].len(), solo.len());
            assert_eq!(res.chunks[i][skip..], solo[skip..]);
        }
    }

    #[test]
    fn stream_edge_cases() {
        let bundle = stub_bundle();
        let mut pool = UapPool::new(vec![dummy_artifact("a", 0.05)], 3).unwrap();
        let empty: Vec<Vec<f64>> = vec![];
        let res = protect_stream(&empty, &mut pool, &bundle).unwrap();
        assert!(res.chunks.is_empty());

        // Short final chunk is fine; a short middle chunk is not.
        let ok = vec![vec![0.1; 1024], vec![0.1; 1024], vec![0.1; 400]];
        assert!(protect_stream(&ok, &mut pool, &bundle).is_ok());
        let bad = vec![vec![0.1; 1024], vec![0.1; 400], vec![0.1; 1024]];
        assert!(matches!(
            protect_stream(&bad, &mut pool, &bundle),
            Err(RuntimeError::InvalidChunking(_))
        ));
        let tiny = vec![vec![0.1; 64]];
        assert!(matches!(
            protect_stream(&tiny, &mut pool, &bundle),
            Err(RuntimeError::InvalidChunking(_))
        ));
    }
}
