//! `prepare`: synthesize the toy corpus, write both split manifests, and --
//! when a trained bundle is already present -- emit the autoencoder
//! screening report.

use sotto_core::audio::Split;
use sotto_core::models::generate_corpus;
use sotto_core::prepare::screen_autoencoder;

use crate::config::{write_run_manifest, ExperimentConfig};
use crate::{manifest, CliError};

use super::{bundle_or_hint, write_csv};

pub fn run_prepare(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let corpus = generate_corpus(cfg.seed);
    let train_manifest = manifest::write_corpus(&corpus.train, Split::Train, &cfg.paths.corpus_dir)?;
    let test_manifest = manifest::write_corpus(&corpus.test, Split::Test, &cfg.paths.corpus_dir)?;
    println!(
        "prepared {} train / {} test clips under {}",
        corpus.train.len(),
        corpus.test.len(),
        cfg.paths.corpus_dir.display()
    );

    let mut files = vec![train_manifest, test_manifest];
    if cfg.paths.models_path.is_file() {
        let bundle = bundle_or_hint(cfg)?;
        let eval: Vec<_> = corpus.test.iter().take(8).cloned().collect();
        let report = screen_autoencoder(&bundle, &eval)?;
        let path = cfg.paths.output_dir.join("screen-report.csv");
        write_csv(
            &path,
            &["model_id", "param_count", "quality_proxy", "zero_shot"],
            &[vec![
                report.model_id.clone(),
                report.param_count.to_string(),
                super::fmt(report.quality_proxy),
                report.zero_shot.to_string(),
            ]],
        )?;
        println!(
            "screened {}: quality_proxy={:.4} ({} params)",
            report.model_id, report.quality_proxy, report.param_count
        );
        files.push(path);
    }

    let run = write_run_manifest(&cfg.paths.output_dir, "prepare", &cfg.digest(), &files)?;
    files.push(run);
    Ok(())
}
