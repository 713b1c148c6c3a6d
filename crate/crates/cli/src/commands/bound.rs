//! `verify-bound`: estimate the decoder's Lipschitz ratio on encoded corpus
//! clips, then Monte-Carlo-check the r-robustness probability bound on a
//! radius grid.

use clap::Args;

use sotto_core::bound::{default_r_grid, estimate_lipschitz, verify_bound};
use sotto_core::models::LatentCode;

use crate::config::{write_run_manifest, ExperimentConfig};
use crate::CliError;

use super::{bundle_or_hint, eval_split_clips, fmt, write_csv};

#[derive(Args, Clone, Debug)]
pub struct VerifyBoundArgs {
    /// Latent pairs for the Lipschitz estimate.
    #[arg(long, default_value_t = 2_000)]
    pub n_pairs: usize,
    /// Monte-Carlo trials per radius.
    #[arg(long, default_value_t = 10_000)]
    pub n_trials: usize,
    /// Multiplier on the estimated Lipschitz ratio before checking.
    #[arg(long, default_value_t = 1.0)]
    pub safety_factor: f64,
}

pub fn run_verify_bound(cfg: &ExperimentConfig, args: &VerifyBoundArgs) -> Result<(), CliError> {
    if args.safety_factor <= 0.0 {
        return Err(CliError::Config("safety factor must be positive".into()));
    }
    let bundle = bundle_or_hint(cfg)?;
    let clips = eval_split_clips(cfg)?;
    let pool: Vec<LatentCode> = clips
        .iter()
        .take(64)
        .map(|c| bundle.encode(&c.samples))
        .collect::<Result<_, _>>()?;

    let tau = cfg.train.tau;
    let estimate = estimate_lipschitz(&bundle, &pool, args.n_pairs, tau, cfg.seed)?;
    let a_hat = estimate.a_hat * args.safety_factor;
    let grid = default_r_grid(a_hat, tau);
    let report = verify_bound(&bundle, tau, a_hat, &grid, args.n_trials, cfg.seed, &pool)?;

    let rows: Vec<Vec<String>> = (0..report.r_grid.len())
        .map(|i| {
            let violated = report.violations.contains(&report.r_grid[i]);
            vec![
                fmt(report.r_grid[i]),
                fmt(report.empirical_prob[i]),
                fmt(report.theoretical_bound[i]),
                fmt(report.margins[i]),
                (violated as u8).to_string(),
            ]
        })
        .collect();
    let report_csv = cfg.paths.output_dir.join("bound-report.csv");
    write_csv(
        &report_csv,
        &["r", "empirical_prob", "theoretical_bound", "margin", "violation"],
        &rows,
    )?;

    let beyond = report.violations_beyond_margin().len();
    let summary_csv = cfg.paths.output_dir.join("bound-summary.csv");
    write_csv(
        &summary_csv,
        &["tau", "a_hat", "safety_factor", "n_pairs", "n_trials", "violations_beyond_margin"],
        &[vec![
            fmt(tau),
            fmt(a_hat),
            fmt(args.safety_factor),
            args.n_pairs.to_string(),
            args.n_trials.to_string(),
            beyond.to_string(),
        ]],
    )?;
    println!(
        "bound: a_hat={:.4} over {} pairs; {} grid points, {} violations beyond the 95% margin",
        a_hat,
        estimate.n_pairs,
        report.r_grid.len(),
        beyond
    );

    write_run_manifest(
        &cfg.paths.output_dir,
        "verify-bound",
        &cfg.digest(),
        &[report_csv, summary_csv],
    )?;
    Ok(())
}
