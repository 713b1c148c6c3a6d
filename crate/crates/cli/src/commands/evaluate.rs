//! `evaluate`: transcribe processed clips with the surrogate ASR and score
//! them against the original transcripts.

use std::path::PathBuf;

use clap::Args;

use sotto_core::metrics::{mean_cer, mean_wer, psr, EvalRecord, MetricConfig};

use crate::config::{write_run_manifest, ExperimentConfig};
use crate::{manifest, CliError};

use super::{bundle_or_hint, eval_split_clips, fmt, reference_for, write_csv};

#[derive(Args, Clone, Debug, Default)]
pub struct EvaluateArgs {
    /// Manifest of processed clips; defaults to <output_dir>/protected/<split>.tsv.
    #[arg(long)]
    pub protected: Option<PathBuf>,
    /// Basename prefix for the emitted CSV files.
    #[arg(long, default_value = "evaluate")]
    pub prefix: String,
}

pub fn run_evaluate(cfg: &ExperimentConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    let bundle = bundle_or_hint(cfg)?;
    let originals = eval_split_clips(cfg)?;
    let protected_path = args.protected.clone().unwrap_or_else(|| {
        cfg.paths
            .output_dir
            .join("protected")
            .join(format!("{}.tsv", cfg.eval.split))
    });
    if !protected_path.is_file() {
        return Err(CliError::Module(format!(
            "no processed manifest at {}; run `sotto protect` first",
            protected_path.display()
        )));
    }
    let processed = manifest::load_clips(&protected_path)?;
    if processed.is_empty() {
        return Err(CliError::Module("processed manifest is empty".into()));
    }

    let metric_cfg = MetricConfig::default();
    let mut records = Vec::with_capacity(processed.len());
    for clip in &processed {
        let reference = reference_for(&originals, &clip.id).ok_or_else(|| {
            CliError::Module(format!(
                "no original transcript found for processed clip {}",
                clip.id
            ))
        })?;
        let hypothesis = bundle.asr.transcribe(&clip.samples).text;
        records.push(EvalRecord::score(&clip.id, reference, &hypothesis, &metric_cfg)?);
    }

    let record_rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.clip_id.clone(),
                r.reference.clone(),
                r.hypothesis.clone(),
                fmt(r.cer),
                fmt(r.wer),
                r.success.to_string(),
                r.excluded.to_string(),
            ]
        })
        .collect();
    let records_csv = cfg
        .paths
        .output_dir
        .join(format!("{}-records.csv", args.prefix));
    write_csv(
        &records_csv,
        &["clip_id", "reference", "hypothesis", "cer", "wer", "success", "excluded"],
        &record_rows,
    )?;

    let summary = [
        records.len().to_string(),
        fmt(psr(&records)?),
        fmt(mean_cer(&records)?),
        fmt(mean_wer(&records)?),
    ];
    let summary_csv = cfg
        .paths
        .output_dir
        .join(format!("{}-summary.csv", args.prefix));
    write_csv(
        &summary_csv,
        &["n", "psr", "mean_cer", "mean_wer"],
        &[summary.to_vec()],
    )?;
    println!(
        "{}: n={} psr={}% mean_cer={}% mean_wer={}%",
        args.prefix, summary[0], summary[1], summary[2], summary[3]
    );

    write_run_manifest(
        &cfg.paths.output_dir,
        "evaluate",
        &cfg.digest(),
        &[records_csv, summary_csv],
    )?;
    Ok(())
}
