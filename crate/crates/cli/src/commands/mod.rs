//! Subcommand implementations. Each command loads what it needs from the
//! configured paths, writes its result files, and finishes with a run
//! manifest naming every file it produced.

use std::path::{Path, PathBuf};

use sotto_core::audio::AudioClip;
use sotto_core::models::{load_bundle, ModelBundle};
use sotto_core::optim::PerturbationArtifact;

use crate::config::ExperimentConfig;
use crate::{artifact, manifest, CliError};

mod bound;
mod defend;
mod distribution;
mod evaluate;
mod prepare;
mod protect;
mod report;
mod train;

pub use bound::{run_verify_bound, VerifyBoundArgs};
pub use defend::{run_defend, run_td_eval, ProtectedInput, TdEvalArgs};
pub use distribution::{run_distribution_report, DistributionArgs};
pub use evaluate::{run_evaluate, EvaluateArgs};
pub use prepare::run_prepare;
pub use protect::{run_protect, run_protect_stream, ProtectArgs, ProtectStreamArgs};
pub use report::run_report;
pub use train::{run_train, run_train_models, TrainArgs};

pub(crate) fn bundle_or_hint(cfg: &ExperimentConfig) -> Result<ModelBundle, CliError> {
    let path = &cfg.paths.models_path;
    if !path.is_file() {
        return Err(CliError::Module(format!(
            "no model bundle at {}; run `sotto train-models` first",
            path.display()
        )));
    }
    Ok(load_bundle(path)?)
}

pub(crate) fn split_manifest_path(cfg: &ExperimentConfig, split: &str) -> PathBuf {
    cfg.paths.corpus_dir.join(format!("{split}.tsv"))
}

/// Clips of the configured evaluation split, truncated to `eval.max_clips`
/// when that is non-zero.
pub(crate) fn eval_split_clips(cfg: &ExperimentConfig) -> Result<Vec<AudioClip>, CliError> {
    let path = split_manifest_path(cfg, &cfg.eval.split);
    if !path.is_file() {
        return Err(CliError::Module(format!(
            "no corpus manifest at {}; run `sotto prepare` first",
            path.display()
        )));
    }
    let mut clips = manifest::load_clips(&path)?;
    if cfg.eval.max_clips > 0 {
        clips.truncate(cfg.eval.max_clips);
    }
    Ok(clips)
}

/// Every artifact in the configured pool directory, sorted by file name so
/// pool order is stable.
pub(crate) fn load_artifact_pool(cfg: &ExperimentConfig) -> Result<Vec<PerturbationArtifact>, CliError> {
    let dir = &cfg.paths.artifacts_dir;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| {
            CliError::Module(format!(
                "no artifact directory at {}; run `sotto train` first ({e})",
                dir.display()
            ))
        })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "uap"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Module(format!(
            "no .uap artifacts in {}; run `sotto train` first",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        out.push(artifact::load_artifact(&p)?.artifact);
    }
    Ok(out)
}

pub(crate) fn write_csv(
    path: &Path,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Module(e.to_string()))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Module(e.to_string()))?;
    w.write_record(header).map_err(|e| CliError::Module(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Module(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Module(e.to_string()))?;
    Ok(())
}

/// Fixed-precision float formatting for CSV cells, so files are
/// byte-comparable across runs.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Reference transcript for a processed clip whose id extends the original
/// id with suffixes like `-protected` or `-defended`: longest prefix wins.
pub(crate) fn reference_for<'a>(
    originals: &'a [AudioClip],
    processed_id: &str,
) -> Option<&'a str> {
    originals
        .iter()
        .filter(|c| processed_id == c.id || processed_id.starts_with(&format!("{}-", c.id)))
        .max_by_key(|c| c.id.len())
        .and_then(|c| c.transcript.as_deref())
}
