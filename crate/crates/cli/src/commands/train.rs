//! `train-models`: fit the toy autoencoder + surrogate ASR on the prepared
//! corpus and persist the bundle. `train`: search the target audio, run the
//! perturbation optimizer, and persist the artifact plus its trace.

use std::io::Write;

use clap::Args;

use sotto_core::models::{save_bundle, train_toy_models, CorpusSplits};
use sotto_core::optim;
use sotto_core::prepare::{search_target_audio, SearchConfig};

use crate::artifact::{created_at_now, save_artifact, StoredArtifact};
use crate::config::{write_run_manifest, ExperimentConfig};
use crate::{manifest, CliError};

use super::{bundle_or_hint, fmt, split_manifest_path, write_csv};

pub fn run_train_models(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let train_path = split_manifest_path(cfg, "train");
    let test_path = split_manifest_path(cfg, "test");
    if !train_path.is_file() || !test_path.is_file() {
        return Err(CliError::Module(format!(
            "corpus manifests missing under {}; run `sotto prepare` first",
            cfg.paths.corpus_dir.display()
        )));
    }
    let corpus = CorpusSplits {
        train: manifest::load_clips(&train_path)?,
        test: manifest::load_clips(&test_path)?,
    };
    let bundle = train_toy_models(&corpus, cfg.seed)?;
    if let Some(parent) = cfg.paths.models_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Module(e.to_string()))?;
    }
    save_bundle(&bundle, &cfg.paths.models_path)?;
    println!(
        "trained bundle at {}: ae_rel_l2={:.4} asr_exact={:.4} tts_round_trip={:.4}",
        cfg.paths.models_path.display(),
        bundle.meta.ae_val_rel_l2,
        bundle.meta.asr_train_exact,
        bundle.meta.tts_round_trip
    );
    write_run_manifest(
        &cfg.paths.output_dir,
        "train-models",
        &cfg.digest(),
        &[cfg.paths.models_path.clone()],
    )?;
    Ok(())
}

/// Ablation knobs; each one overrides a single training-config field before
/// the config digest is taken.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainArgs {
    /// Similarity-loss weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Perturbation l-inf bound.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Latent noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Convolve a synthetic room impulse response during training.
    #[arg(long)]
    pub use_rir: bool,
    /// Target phrase override.
    #[arg(long)]
    pub target_text: Option<String>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.lambda {
            cfg.train.lambda = v;
        }
        if let Some(v) = self.tau {
            cfg.train.tau = v;
        }
        if let Some(v) = self.sigma {
            cfg.train.sigma = v;
        }
        if self.use_rir {
            cfg.train.use_rir = true;
        }
        if let Some(t) = &self.target_text {
            cfg.target_text = t.clone();
        }
    }
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let digest = cfg.digest();
    let bundle = bundle_or_hint(cfg)?;
    let train_path = split_manifest_path(cfg, "train");
    if !train_path.is_file() {
        return Err(CliError::Module(format!(
            "no corpus manifest at {}; run `sotto prepare` first",
            train_path.display()
        )));
    }
    let dataset = manifest::load_clips(&train_path)?;

    let search_cfg = SearchConfig {
        n: cfg.train.n_targets,
        decay: cfg.train.decay_rate,
        seed: cfg.seed,
        ..SearchConfig::default()
    };
    let target = search_target_audio(&cfg.target_text, &search_cfg, &bundle)?;
    println!(
        "target '{}': scale={:.6} search_loss={:.4}",
        target.target_text, target.scale, target.search_loss
    );
    let search_csv = cfg.paths.output_dir.join("target-search.csv");
    write_csv(
        &search_csv,
        &["target_text", "scale", "search_loss", "last_ok_scale"],
        &[vec![
            target.target_text.clone(),
            fmt(target.scale),
            fmt(target.search_loss),
            target.last_ok_scale.map(fmt).unwrap_or_default(),
        ]],
    )?;

    let (artifact, trace) = optim::train(&cfg.train, &dataset, &target, &bundle, None)?;
    println!(
        "trained {}: {} iterations, final l_total={:.4}, max|delta|={:.6}",
        artifact.id,
        trace.records.len(),
        trace.records.last().map(|r| r.l_total).unwrap_or(f64::NAN),
        artifact.max_abs()
    );

    std::fs::create_dir_all(&cfg.paths.artifacts_dir)
        .map_err(|e| CliError::Module(e.to_string()))?;
    let artifact_path = cfg
        .paths
        .artifacts_dir
        .join(format!("{}-{}.uap", artifact.id, &digest[..8]));
    save_artifact(
        &StoredArtifact {
            artifact,
            train_config_digest: digest.clone(),
            created_at: created_at_now(),
        },
        &artifact_path,
    )?;

    let trace_path = cfg.paths.output_dir.join("train-trace.jsonl");
    std::fs::create_dir_all(&cfg.paths.output_dir).map_err(|e| CliError::Module(e.to_string()))?;
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&trace_path).map_err(|e| CliError::Module(e.to_string()))?,
    );
    for record in &trace.records {
        let line = serde_json::to_string(record).map_err(|e| CliError::Module(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| CliError::Module(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Module(e.to_string()))?;

    write_run_manifest(
        &cfg.paths.output_dir,
        "train",
        &digest,
        &[search_csv, artifact_path, trace_path],
    )?;
    Ok(())
}
