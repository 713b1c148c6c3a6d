//! `protect`: run the batch protection path over a manifest of clips.
//! `protect-stream`: raw 16-bit little-endian PCM chunks over standard
//! input/output, one artifact per stream.

use std::io::{Read, Write};
use std::path::PathBuf;

use clap::Args;

use sotto_core::audio::Split;
use sotto_core::runtime::{protect, protect_stream, UapPool};
use sotto_core::CANONICAL_RATE;

use crate::config::{write_run_manifest, ExperimentConfig};
use crate::{manifest, CliError};

use super::{bundle_or_hint, eval_split_clips, fmt, load_artifact_pool, write_csv};

#[derive(Args, Clone, Debug, Default)]
pub struct ProtectArgs {
    /// Manifest of clips to protect; defaults to the evaluation split.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn run_protect(cfg: &ExperimentConfig, args: &ProtectArgs) -> Result<(), CliError> {
    let bundle = bundle_or_hint(cfg)?;
    let mut pool = UapPool::new(load_artifact_pool(cfg)?, cfg.seed)?;
    let clips = match &args.input {
        Some(path) => manifest::load_clips(path)?,
        None => eval_split_clips(cfg)?,
    };
    if clips.is_empty() {
        return Err(CliError::Module("no clips to protect".into()));
    }

    let mut protected = Vec::with_capacity(clips.len());
    let mut result_rows = Vec::with_capacity(clips.len());
    let mut latency_rows = Vec::with_capacity(clips.len());
    let mut latency_sum = 0.0;
    for clip in &clips {
        let result = protect(clip, &mut pool, &bundle)?;
        result_rows.push(vec![
            result.protected.id.clone(),
            result.artifact_id.clone(),
            result.protected.len().to_string(),
        ]);
        latency_rows.push(vec![result.protected.id.clone(), fmt(result.latency_ms)]);
        latency_sum += result.latency_ms;
        protected.push(result.protected);
    }

    let split = match cfg.eval.split.as_str() {
        "train" => Split::Train,
        _ => Split::Test,
    };
    let root = cfg.paths.output_dir.join("protected");
    let protected_manifest = manifest::write_corpus(&protected, split, &root)?;

    let results_csv = cfg.paths.output_dir.join("protect-results.csv");
    write_csv(
        &results_csv,
        &["clip_id", "artifact_id", "n_samples"],
        &result_rows,
    )?;
    // Timing lives in its own file; it is excluded from the byte-identical
    // reproducibility contract.
    let latency_csv = cfg.paths.output_dir.join("protect-latency.csv");
    write_csv(&latency_csv, &["clip_id", "latency_ms"], &latency_rows)?;

    let mean_latency = latency_sum / protected.len() as f64;
    println!(
        "protected {} clips (mean latency {:.2} ms) -> {}",
        protected.len(),
        mean_latency,
        root.display()
    );

    write_run_manifest(
        &cfg.paths.output_dir,
        "protect",
        &cfg.digest(),
        &[protected_manifest, results_csv, latency_csv],
    )?;
    Ok(())
}

#[derive(Args, Clone, Debug)]
pub struct ProtectStreamArgs {
    /// Samples per chunk read from standard input.
    #[arg(long, default_value_t = 16_000)]
    pub chunk_size: usize,
}

pub fn run_protect_stream(cfg: &ExperimentConfig, args: &ProtectStreamArgs) -> Result<(), CliError> {
    if args.chunk_size == 0 {
        return Err(CliError::Config("chunk size must be positive".into()));
    }
    let bundle = bundle_or_hint(cfg)?;
    let mut pool = UapPool::new(load_artifact_pool(cfg)?, cfg.seed)?;

    let mut raw = Vec::new();
    std::io::stdin()
        .read_to_end(&mut raw)
        .map_err(|e| CliError::Module(format!("stdin: {e}")))?;
    if raw.len() % 2 != 0 {
        return Err(CliError::Module("stdin byte count is odd; want 16-bit samples".into()));
    }
    let samples: Vec<f64> = raw
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32_768.0)
        .collect();
    let chunks: Vec<Vec<f64>> = samples
        .chunks(args.chunk_size)
        .map(|c| c.to_vec())
        .collect();

    let result = protect_stream(&chunks, &mut pool, &bundle)?;

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for chunk in &result.chunks {
        for &s in chunk {
            let q = (s * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16;
            out.write_all(&q.to_le_bytes())
                .map_err(|e| CliError::Module(format!("stdout: {e}")))?;
        }
    }
    out.flush().map_err(|e| CliError::Module(format!("stdout: {e}")))?;

    let latency_rows: Vec<Vec<String>> = result
        .chunk_latency_ms
        .iter()
        .enumerate()
        .map(|(i, &ms)| vec![i.to_string(), fmt(ms)])
        .collect();
    let latency_csv = cfg.paths.output_dir.join("stream-latency.csv");
    write_csv(&latency_csv, &["chunk", "latency_ms"], &latency_rows)?;
    eprintln!(
        "protected {} chunks of {} samples at {} Hz with {}; max latency {:.2} ms",
        result.chunks.len(),
        args.chunk_size,
        CANONICAL_RATE,
        result.artifact_id,
        result
            .chunk_latency_ms
            .iter()
            .cloned()
            .fold(0.0f64, f64::max)
    );

    write_run_manifest(&cfg.paths.output_dir, "protect-stream", &cfg.digest(), &[latency_csv])?;
    Ok(())
}
