//! `defend`: apply the configured countermeasures to protected clips and
//! score what the surrogate ASR recovers. `td-eval`: temporal-dependency
//! detection AUC between benign and protected sets.

use std::path::PathBuf;

use clap::Args;

use sotto_core::audio::AudioClip;
use sotto_core::defense::{defend, latent_countermeasure, td_evaluate, td_score, DefenseKind};
use sotto_core::metrics::{mean_cer, mean_wer, psr, EvalRecord, MetricConfig};
use sotto_core::models::ModelBundle;

use crate::config::{write_run_manifest, DefenseSpec, ExperimentConfig};
use crate::{manifest, CliError};

use super::{bundle_or_hint, eval_split_clips, fmt, reference_for, write_csv};

fn default_protected_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.paths
        .output_dir
        .join("protected")
        .join(format!("{}.tsv", cfg.eval.split))
}

fn load_protected(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> Result<Vec<AudioClip>, CliError> {
    let path = flag.clone().unwrap_or_else(|| default_protected_path(cfg));
    if !path.is_file() {
        return Err(CliError::Module(format!(
            "no processed manifest at {}; run `sotto protect` first",
            path.display()
        )));
    }
    let clips = manifest::load_clips(&path)?;
    if clips.is_empty() {
        return Err(CliError::Module("processed manifest is empty".into()));
    }
    Ok(clips)
}

fn apply_defense(
    spec: &DefenseSpec,
    seed: u64,
    clips: &[AudioClip],
    bundle: &ModelBundle,
) -> Result<Vec<AudioClip>, CliError> {
    let cfg = spec.to_defense_config(seed)?;
    let mut out = Vec::with_capacity(clips.len());
    for clip in clips {
        let defended = match cfg.kind {
            DefenseKind::LatentRecon => latent_countermeasure(clip, &cfg, bundle)?,
            _ => defend(clip, &cfg)?,
        };
        out.push(defended);
    }
    Ok(out)
}

#[derive(Args, Clone, Debug, Default)]
pub struct ProtectedInput {
    /// Manifest of protected clips; defaults to <output_dir>/protected/<split>.tsv.
    #[arg(long)]
    pub protected: Option<PathBuf>,
}

pub fn run_defend(cfg: &ExperimentConfig, input: &ProtectedInput) -> Result<(), CliError> {
    let bundle = bundle_or_hint(cfg)?;
    let originals = eval_split_clips(cfg)?;
    let protected = load_protected(cfg, &input.protected)?;

    let specs: Vec<&DefenseSpec> = cfg
        .defenses
        .iter()
        .filter(|s| s.kind != "td-detect")
        .collect();
    if specs.is_empty() {
        return Err(CliError::Config(
            "no applicable defenses configured (td-detect is evaluated by td-eval)".into(),
        ));
    }

    let metric_cfg = MetricConfig::default();
    let mut summary_rows = Vec::new();
    let mut files = Vec::new();
    for spec in specs {
        let defended = apply_defense(spec, cfg.seed, &protected, &bundle)?;
        let mut records = Vec::with_capacity(defended.len());
        for clip in &defended {
            let reference = reference_for(&originals, &clip.id).ok_or_else(|| {
                CliError::Module(format!("no original transcript for {}", clip.id))
            })?;
            let hypothesis = bundle.asr.transcribe(&clip.samples).text;
            records.push(EvalRecord::score(&clip.id, reference, &hypothesis, &metric_cfg)?);
        }
        let label = spec.label();
        let record_rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.clip_id.clone(),
                    fmt(r.cer),
                    fmt(r.wer),
                    r.success.to_string(),
                ]
            })
            .collect();
        let records_csv = cfg
            .paths
            .output_dir
            .join(format!("defend-{label}-records.csv"));
        write_csv(&records_csv, &["clip_id", "cer", "wer", "success"], &record_rows)?;
        files.push(records_csv);

        summary_rows.push(vec![
            label.clone(),
            records.len().to_string(),
            fmt(psr(&records)?),
            fmt(mean_cer(&records)?),
            fmt(mean_wer(&records)?),
        ]);
        let last = summary_rows.last().unwrap();
        println!(
            "defense {}: psr={}% mean_cer={}% mean_wer={}%",
            last[0], last[2], last[3], last[4]
        );
    }

    let summary_csv = cfg.paths.output_dir.join("defend-summary.csv");
    write_csv(
        &summary_csv,
        &["defense", "n", "psr", "mean_cer", "mean_wer"],
        &summary_rows,
    )?;
    files.push(summary_csv);

    write_run_manifest(&cfg.paths.output_dir, "defend", &cfg.digest(), &files)?;
    Ok(())
}

#[derive(Args, Clone, Debug)]
pub struct TdEvalArgs {
    #[command(flatten)]
    pub input: ProtectedInput,
    /// Prefix fraction; defaults to the first td-detect entry in the config,
    /// then 0.25.
    #[arg(long)]
    pub k: Option<f64>,
}

pub fn run_td_eval(cfg: &ExperimentConfig, args: &TdEvalArgs) -> Result<(), CliError> {
    let bundle = bundle_or_hint(cfg)?;
    let benign = eval_split_clips(cfg)?;
    let protected = load_protected(cfg, &args.input.protected)?;
    let k = args
        .k
        .or_else(|| {
            cfg.defenses
                .iter()
                .find(|s| s.kind == "td-detect")
                .map(|s| s.k)
        })
        .unwrap_or(0.25);

    let mut score_rows = Vec::new();
    let mut medians = (Vec::new(), Vec::new());
    for (set, clips) in [("benign", &benign), ("protected", &protected)] {
        for clip in clips.iter() {
            let score = td_score(clip, k, &bundle)?;
            if set == "benign" {
                medians.0.push(score);
            } else {
                medians.1.push(score);
            }
            score_rows.push(vec![set.to_string(), clip.id.clone(), fmt(score)]);
        }
    }
    let auc = td_evaluate(&benign, &protected, k, &bundle)?;

    let scores_csv = cfg.paths.output_dir.join("td-scores.csv");
    write_csv(&scores_csv, &["set", "clip_id", "score"], &score_rows)?;

    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.total_cmp(b));
        v[v.len() / 2]
    };
    let summary_csv = cfg.paths.output_dir.join("td-summary.csv");
    write_csv(
        &summary_csv,
        &["k", "auc", "n_benign", "n_protected", "median_benign", "median_protected"],
        &[vec![
            fmt(k),
            fmt(auc),
            medians.0.len().to_string(),
            medians.1.len().to_string(),
            fmt(median(&mut medians.0)),
            fmt(median(&mut medians.1)),
        ]],
    )?;
    println!("td-eval at k={k}: auc={auc:.4}");

    write_run_manifest(
        &cfg.paths.output_dir,
        "td-eval",
        &cfg.digest(),
        &[scores_csv, summary_csv],
    )?;
    Ok(())
}
