//! Experiment configuration: a TOML file with defaults for every field, a
//! master seed propagated to each stochastic component, and a digest of the
//! resolved config recorded in every run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sotto_core::defense::{DefenseConfig, LatentMode};
use sotto_core::optim::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub corpus_dir: PathBuf,
    pub models_path: PathBuf,
    pub artifacts_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus_dir: "data/corpus".into(),
            models_path: "data/models.bin".into(),
            artifacts_dir: "data/artifacts".into(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub split: String,
    /// 0 means every clip in the split.
    pub max_clips: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            split: "test".into(),
            max_clips: 0,
        }
    }
}

/// One defense setting in the config file; unset fields take the module
/// defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseSpec {
    pub kind: String,
    pub h: usize,
    pub dr: u32,
    pub k: f64,
    pub latent_mode: String,
    pub latent_h: usize,
    pub latent_noise_std: f64,
}

impl Default for DefenseSpec {
    fn default() -> Self {
        DefenseSpec {
            kind: "smooth".into(),
            h: 1,
            dr: 14_000,
            k: 0.25,
            latent_mode: "recon".into(),
            latent_h: 1,
            latent_noise_std: 1.0,
        }
    }
}

impl DefenseSpec {
    pub fn to_defense_config(&self, seed: u64) -> Result<DefenseConfig, CliError> {
        let mut cfg = match self.kind.as_str() {
            "smooth" => DefenseConfig::smooth(self.h),
            "downsample" => DefenseConfig::downsample(self.dr),
            "td-detect" => DefenseConfig::td_detect(self.k),
            "latent" => {
                let mode = match self.latent_mode.as_str() {
                    "recon" => LatentMode::Recon,
                    "ls-ls" => LatentMode::LsLs,
                    "ls-rn" => LatentMode::LsRn,
                    other => {
                        return Err(CliError::Config(format!("unknown latent mode {other:?}")))
                    }
                };
                DefenseConfig::latent(mode, self.latent_h, self.latent_noise_std, seed)
            }
            other => return Err(CliError::Config(format!("unknown defense kind {other:?}"))),
        };
        cfg.seed = seed;
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Human-readable row label for result tables.
    pub fn label(&self) -> String {
        match self.kind.as_str() {
            "smooth" => format!("smooth-h{}", self.h),
            "downsample" => format!("downsample-{}hz", self.dr),
            "td-detect" => format!("td-detect-k{}", self.k),
            "latent" => format!("latent-{}", self.latent_mode),
            other => other.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub target_text: String,
    pub paths: PathsConfig,
    pub train: TrainConfig,
    pub defenses: Vec<DefenseSpec>,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            target_text: "open the box now".into(),
            paths: PathsConfig::default(),
            train: TrainConfig::default(),
            defenses: vec![
                DefenseSpec {
                    kind: "smooth".into(),
                    ..DefenseSpec::default()
                },
                DefenseSpec {
                    kind: "downsample".into(),
                    ..DefenseSpec::default()
                },
            ],
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match path {
            None => ExperimentConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("parse {}: {e}", p.display())))?
            }
        };
        cfg.resolve();
        Ok(cfg)
    }

    /// Propagate the master seed into every stochastic component and check
    /// the cheap invariants.
    pub fn resolve(&mut self) {
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.target_text.trim().is_empty() {
            return Err(CliError::Config("target_text is empty".into()));
        }
        match self.eval.split.as_str() {
            "train" | "test" => {}
            other => return Err(CliError::Config(format!("unknown eval split {other:?}"))),
        }
        for spec in &self.defenses {
            spec.to_defense_config(self.seed)?;
        }
        Ok(())
    }

    /// Hex digest of the resolved config's canonical serialization.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// What a subcommand produced; written next to the results so any run can be
/// traced back to its exact configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_digest: String,
    pub created_at: u64,
    pub files: Vec<String>,
}

pub fn write_run_manifest(
    output_dir: &Path,
    subcommand: &str,
    config_digest: &str,
    files: &[PathBuf],
) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(output_dir)
        .map_err(|e| CliError::Module(format!("create {}: {e}", output_dir.display())))?;
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config_digest: config_digest.to_string(),
        created_at: crate::artifact::created_at_now(),
        files: files.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = output_dir.join(format!("{subcommand}-manifest.json"));
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Module(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::Module(e.to_string()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_digest_is_stable() {
        let mut cfg = ExperimentConfig::default();
        cfg.resolve();
        cfg.validate().unwrap();
        assert_eq!(cfg.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);

        let mut other = cfg.clone();
        other.train.lambda = 0.0;
        assert_ne!(cfg.digest(), other.digest());
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let mut cfg = ExperimentConfig::default();
        cfg.resolve();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);

        let partial: ExperimentConfig = toml::from_str("seed = 7\n[train]\nlambda = 0.0\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.train.lambda, 0.0);
        assert_eq!(partial.train.tau, 0.5);
    }

    #[test]
    fn master_seed_propagates_to_train() {
        let mut cfg: ExperimentConfig = toml::from_str("seed = 9\n").unwrap();
        cfg.resolve();
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn bad_specs_are_config_errors() {
        let mut cfg = ExperimentConfig::default();
        cfg.defenses[0].kind = "reverb".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));

        let mut cfg = ExperimentConfig::default();
        cfg.target_text = "  ".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));

        let mut cfg = ExperimentConfig::default();
        cfg.eval.split = "dev".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn defense_specs_map_to_module_configs() {
        let spec = DefenseSpec {
            kind: "latent".into(),
            latent_mode: "ls-rn".into(),
            latent_noise_std: 0.5,
            ..DefenseSpec::default()
        };
        let cfg = spec.to_defense_config(3).unwrap();
        assert_eq!(cfg.latent_mode, LatentMode::LsRn);
        assert_eq!(cfg.seed, 3);
        assert_eq!(spec.label(), "latent-ls-rn");
    }
}
