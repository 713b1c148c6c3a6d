//! Distribution fidelity: how closely a processed clip set matches the
//! original corpus in MFCC-mean space, measured as the overlap of kernel
//! density estimates, plus the noise baseline calibrated to a matched error
//! rate.

use thiserror::Error;

use crate::audio::AudioClip;
use crate::dsp::{kde_density, kde_grid, mfcc, silverman_bandwidth, DspError, MfccConfig};
use crate::metrics::{EvalRecord, MetricConfig, MetricError};
use crate::models::{ModelBundle, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("need at least one clip")]
    EmptyInput,
    #[error("clip {0} has no reference transcript")]
    MissingTranscript(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Per-clip MFCC means pooled into one scalar sample per (clip, coefficient),
/// skipping c0 so loudness alone cannot separate the sets.
pub fn mfcc_mean_pool(
    clips: &[AudioClip],
    cfg: &MfccConfig,
) -> Result<Vec<f64>, DistributionError> {
    if clips.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    let mut pool = Vec::with_capacity(clips.len() * (cfg.n_coeffs - 1));
    for clip in clips {
        let coeffs = mfcc(&clip.samples, cfg)?;
        let frames = coeffs.nrows() as f64;
        for c in 1..cfg.n_coeffs {
            pool.push(coeffs.column(c).sum() / frames);
        }
    }
    Ok(pool)
}

/// Both KDE curves on one shared grid plus their overlap coefficient.
#[derive(Clone, Debug)]
pub struct DistributionReport {
    pub grid: Vec<f64>,
    pub density_a: Vec<f64>,
    pub density_b: Vec<f64>,
    /// Integral of min(density_a, density_b); 1 means identical
    /// distributions, 0 means disjoint.
    pub overlap: f64,
}

fn trapezoid(y: &[f64], x: &[f64]) -> f64 {
    (1..x.len())
        .map(|i| 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]))
        .sum()
}

const GRID_POINTS: usize = 512;
const GRID_MARGIN_BANDWIDTHS: f64 = 5.0;

/// KDE curves of two scalar samples on a shared grid wide enough for both.
pub fn distribution_report(a: &[f64], b: &[f64]) -> Result<DistributionReport, DistributionError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    let bw_a = silverman_bandwidth(a)?;
    let bw_b = silverman_bandwidth(b)?;
    let mut combined = Vec::with_capacity(a.len() + b.len());
    combined.extend_from_slice(a);
    combined.extend_from_slice(b);
    let grid = kde_grid(&combined, bw_a.max(bw_b), GRID_POINTS, GRID_MARGIN_BANDWIDTHS);
    let density_a = kde_density(a, bw_a, &grid)?;
    let density_b = kde_density(b, bw_b, &grid)?;
    let mins: Vec<f64> = density_a
        .iter()
        .zip(&density_b)
        .map(|(&x, &y)| x.min(y))
        .collect();
    let overlap = trapezoid(&mins, &grid);
    Ok(DistributionReport {
        grid,
        density_a,
        density_b,
        overlap,
    })
}

/// The overlap coefficient alone.
pub fn overlap_coefficient(a: &[f64], b: &[f64]) -> Result<f64, DistributionError> {
    Ok(distribution_report(a, b)?.overlap)
}

/// Add seeded white noise at `amplitude` to every clip; per-clip noise is
/// fixed by the clip index, so amplitude sweeps stay comparable.
pub fn add_white_noise(clips: &[AudioClip], amplitude: f64, master_seed: u64) -> Vec<AudioClip> {
    use rand::Rng;
    clips
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let mut rng = seed::rng_indexed(master_seed, "white-noise", i as u64);
            let samples = clip
                .samples
                .iter()
                .map(|&s| (s + amplitude * rng.gen_range(-1.0..1.0)).clamp(-1.0, 1.0))
                .collect();
            let mut out = AudioClip::new(format!("{}-noise", clip.id), samples, clip.sample_rate);
            out.transcript = clip.transcript.clone();
            out
        })
        .collect()
}

fn mean_cer_against_transcripts(
    clips: &[AudioClip],
    bundle: &ModelBundle,
) -> Result<f64, DistributionError> {
    let cfg = MetricConfig::default();
    let mut sum = 0.0;
    for clip in clips {
        let reference = clip
            .transcript
            .as_deref()
            .ok_or_else(|| DistributionError::MissingTranscript(clip.id.clone()))?;
        let hyp = bundle.transcribe(&clip.samples).text;
        sum += EvalRecord::score(&clip.id, reference, &hyp, &cfg)?.cer;
    }
    Ok(sum / clips.len() as f64)
}

/// Bisect a white-noise amplitude until the surrogate ASR's mean CER on the
/// noisy clips reaches `target_cer`. Returns (amplitude, achieved mean CER);
/// the baseline for the fidelity comparison at matched damage.
pub fn calibrate_noise_to_cer(
    clips: &[AudioClip],
    bundle: &ModelBundle,
    target_cer: f64,
    master_seed: u64,
) -> Result<(f64, f64), DistributionError> {
    if clips.is_empty() {
        return Err(DistributionError::EmptyInput);
    }
    assert!(target_cer > 0.0, "target CER must be positive");
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut best = (hi, f64::INFINITY);
    for _ in 0..24 {
        let mid = 0.5 * (lo + hi);
        let noisy = add_white_noise(clips, mid, master_seed);
        let cer = mean_cer_against_transcripts(&noisy, bundle)?;
        if (cer - target_cer).abs() < (best.1 - target_cer).abs() {
            best = (mid, cer);
        }
        if cer < target_cer {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CANONICAL_RATE;
    use rand::Rng;

    fn tone_clips(base_freq: f64, count: usize) -> Vec<AudioClip> {
        (0..count)
            .map(|i| {
                let f = base_freq + 40.0 * i as f64;
                let samples = (0..8000)
                    .map(|n| 0.4 * (std::f64::consts::TAU * f * n as f64 / 16_000.0).sin())
                    .collect();
                AudioClip::new(format!("t{i}"), samples, CANONICAL_RATE)
            })
            .collect()
    }

    #[test]
    fn pool_has_one_sample_per_clip_and_coefficient() {
        let cfg = MfccConfig::default();
        let clips = tone_clips(300.0, 4);
        let pool = mfcc_mean_pool(&clips, &cfg).unwrap();
        assert_eq!(pool.len(), 4 * (cfg.n_coeffs - 1));
        assert!(pool.iter().all(|v| v.is_finite()));
        let again = mfcc_mean_pool(&clips, &cfg).unwrap();
        assert_eq!(pool, again);
        assert!(matches!(
            mfcc_mean_pool(&[], &cfg),
            Err(DistributionError::EmptyInput)
        ));
    }

    #[test]
    fn identical_samples_overlap_near_one() {
        let mut rng = seed::rng(4, "ovl");
        let a: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ovl = overlap_coefficient(&a, &a).unwrap();
        assert!(ovl > 0.98, "overlap {ovl}");
        assert!(ovl <= 1.0 + 1e-6);
    }

    #[test]
    fn far_apart_samples_overlap_near_zero() {
        let mut rng = seed::rng(4, "ovl2");
        let a: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 100.0).collect();
        let ovl = overlap_coefficient(&a, &b).unwrap();
        assert!(ovl < 0.02, "overlap {ovl}");
    }

    #[test]
    fn overlap_is_symmetric_and_decreases_with_shift() {
        let mut rng = seed::rng(5, "ovl3");
        let a: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for shift in [0.5, 1.5, 3.0] {
            let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let ab = overlap_coefficient(&a, &b).unwrap();
            let ba = overlap_coefficient(&b, &a).unwrap();
            assert_eq!(ab.to_bits(), ba.to_bits());
            assert!(ab < last, "overlap should shrink: {ab} vs {last}");
            last = ab;
        }
    }

    #[test]
    fn report_curves_are_consistent_with_the_overlap() {
        let a = vec![0.0, 0.2, 0.4, 0.9, 1.3];
        let b = vec![0.3, 0.5, 0.8, 1.0, 2.0];
        let report = distribution_report(&a, &b).unwrap();
        assert_eq!(report.grid.len(), GRID_POINTS);
        assert_eq!(report.density_a.len(), GRID_POINTS);
        assert_eq!(report.density_b.len(), GRID_POINTS);
        let ovl = overlap_coefficient(&a, &b).unwrap();
        assert_eq!(report.overlap.to_bits(), ovl.to_bits());
        // Each curve still integrates to about 1 on the shared grid.
        let ia = trapezoid(&report.density_a, &report.grid);
        let ib = trapezoid(&report.density_b, &report.grid);
        assert!((ia - 1.0).abs() < 0.01, "integral a = {ia}");
        assert!((ib - 1.0).abs() < 0.01, "integral b = {ib}");
    }

    #[test]
    fn white_noise_is_seeded_and_respects_amplitude() {
        let clips = tone_clips(400.0, 2);
        let a = add_white_noise(&clips, 0.1, 7);
        let b = add_white_noise(&clips, 0.1, 7);
        assert_eq!(a[0].samples, b[0].samples);
        assert_ne!(a[0].samples, clips[0].samples);
        let zero = add_white_noise(&clips, 0.0, 7);
        assert_eq!(zero[1].samples, clips[1].samples);
        assert!(a.iter().all(|c| c.is_valid()));
        // Same seed, different amplitude: the underlying noise pattern is
        // shared, so the deviation scales linearly before clamping.
        let large = add_white_noise(&clips, 0.2, 7);
        let d_small = a[0].samples[100] - clips[0].samples[100];
        let d_large = large[0].samples[100] - clips[0].samples[100];
        assert!((d_large - 2.0 * d_small).abs() < 1e-12);
    }
}
