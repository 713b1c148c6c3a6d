//! `distribution-report`: KDE overlap between the MFCC pools of protected
//! and original audio, with a white-noise baseline calibrated to the same
//! transcription damage.

use std::path::PathBuf;

use clap::Args;

use sotto_core::distribution::{
    add_white_noise, calibrate_noise_to_cer, distribution_report, mfcc_mean_pool,
};
use sotto_core::dsp::MfccConfig;
use sotto_core::metrics::{mean_cer, EvalRecord, MetricConfig};
use sotto_core::models::ModelBundle;
use sotto_core::AudioClip;

use crate::config::{write_run_manifest, ExperimentConfig};
use crate::manifest::load_clips;
use crate::CliError;

use super::{bundle_or_hint, eval_split_clips, fmt, write_csv};

#[derive(Args, Clone, Debug)]
pub struct DistributionArgs {
    /// Manifest of protected clips; defaults to the protect output for the
    /// eval split.
    #[arg(long)]
    pub protected: Option<PathBuf>,
}

fn mean_cer_of(clips: &[AudioClip], bundle: &ModelBundle) -> Result<f64, CliError> {
    let cfg = MetricConfig::default();
    let mut records = Vec::with_capacity(clips.len());
    for clip in clips {
        let reference = clip.transcript.as_deref().ok_or_else(|| {
            CliError::Module(format!("clip {} carries no transcript", clip.id))
        })?;
        let hyp = bundle.transcribe(&clip.samples).text;
        records.push(EvalRecord::score(&clip.id, reference, &hyp, &cfg)?);
    }
    Ok(mean_cer(&records)?)
}

pub fn run_distribution_report(
    cfg: &ExperimentConfig,
    args: &DistributionArgs,
) -> Result<(), CliError> {
    let bundle = bundle_or_hint(cfg)?;
    let originals = eval_split_clips(cfg)?;
    let protected_manifest = args.protected.clone().unwrap_or_else(|| {
        cfg.paths
            .output_dir
            .join("protected")
            .join(format!("{}.tsv", cfg.eval.split))
    });
    let mut protected = load_clips(&protected_manifest)?;
    if cfg.eval.max_clips > 0 {
        protected.truncate(cfg.eval.max_clips);
    }
    if protected.is_empty() {
        return Err(CliError::Module("no protected clips to compare".into()));
    }

    let mfcc_cfg = MfccConfig::default();
    let pool_original = mfcc_mean_pool(&originals, &mfcc_cfg)?;
    let pool_protected = mfcc_mean_pool(&protected, &mfcc_cfg)?;
    let protected_report = distribution_report(&pool_protected, &pool_original)?;

    // Baseline: white noise dialed to the same mean CER the protection
    // causes, then compared against the originals the same way.
    let protected_cer = mean_cer_of(&protected, &bundle)?;
    let (amplitude, achieved_cer) =
        calibrate_noise_to_cer(&originals, &bundle, protected_cer.max(1e-3), cfg.seed)?;
    let noisy = add_white_noise(&originals, amplitude, cfg.seed);
    let pool_noisy = mfcc_mean_pool(&noisy, &mfcc_cfg)?;
    let noise_report = distribution_report(&pool_noisy, &pool_original)?;

    let curve_rows: Vec<Vec<String>> = (0..protected_report.grid.len())
        .map(|i| {
            vec![
                fmt(protected_report.grid[i]),
                fmt(protected_report.density_a[i]),
                fmt(protected_report.density_b[i]),
            ]
        })
        .collect();
    let curves_csv = cfg.paths.output_dir.join("distribution-curves.csv");
    write_csv(
        &curves_csv,
        &["grid", "density_protected", "density_original"],
        &curve_rows,
    )?;

    let noise_rows: Vec<Vec<String>> = (0..noise_report.grid.len())
        .map(|i| {
            vec![
                fmt(noise_report.grid[i]),
                fmt(noise_report.density_a[i]),
                fmt(noise_report.density_b[i]),
            ]
        })
        .collect();
    let noise_csv = cfg.paths.output_dir.join("distribution-noise-curves.csv");
    write_csv(
        &noise_csv,
        &["grid", "density_noise", "density_original"],
        &noise_rows,
    )?;

    let summary_csv = cfg.paths.output_dir.join("distribution-summary.csv");
    write_csv(
        &summary_csv,
        &[
            "overlap_protected",
            "overlap_noise",
            "protected_cer",
            "noise_amplitude",
            "noise_cer",
            "n_original",
            "n_protected",
        ],
        &[vec![
            fmt(protected_report.overlap),
            fmt(noise_report.overlap),
            fmt(protected_cer),
            fmt(amplitude),
            fmt(achieved_cer),
            originals.len().to_string(),
            protected.len().to_string(),
        ]],
    )?;
    println!(
        "distribution: overlap protected={:.4} noise-baseline={:.4} (amplitude={:.4} at cer={:.1})",
        protected_report.overlap, noise_report.overlap, amplitude, achieved_cer
    );

    write_run_manifest(
        &cfg.paths.output_dir,
        "distribution-report",
        &cfg.digest(),
        &[curves_csv, noise_csv, summary_csv],
    )?;
    Ok(())
}
