//! Empirical check of the decoder r-robustness bound
//! P[|D(z1) - D(z2)|_inf <= r] >= 1 - min{1, a^2 tau / r^2}
//! under the tau-ball pairing z2 = z1 + delta, |delta|_inf <= tau, plus the
//! sampled Lipschitz estimate the bound needs.

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::models::{LatentCode, LatentDecoder, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("sampled pair is degenerate: |z1 - z2|_inf = 0 after repeated resampling")]
    DegeneratePair,
    #[error("latent pool must be non-empty")]
    EmptyPool,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Sampled lower bound on the decoder's Lipschitz constant under the sup
/// norm, with digests of the pair that achieved the maximum ratio.
#[derive(Clone, Debug)]
pub struct LipschitzEstimate {
    pub a_hat: f64,
    pub n_pairs: usize,
    pub max_ratio_pair: (u64, u64),
}

/// Per-radius comparison of the Monte-Carlo probability against the
/// theoretical curve.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub tau: f64,
    pub a_hat: f64,
    pub n_trials: usize,
    pub r_grid: Vec<f64>,
    pub empirical_prob: Vec<f64>,
    pub theoretical_bound: Vec<f64>,
    /// Radii where the empirical probability fell below the bound at all.
    pub violations: Vec<f64>,
    /// Binomial 95% margins on the empirical probabilities.
    pub margins: Vec<f64>,
}

impl BoundReport {
    /// Radii where the shortfall exceeds the sampling margin; the acceptance
    /// check requires this to be empty.
    pub fn violations_beyond_margin(&self) -> Vec<f64> {
        self.r_grid
            .iter()
            .zip(&self.empirical_prob)
            .zip(&self.theoretical_bound)
            .zip(&self.margins)
            .filter(|(((_, &p), &b), &m)| p + m < b)
            .map(|(((&r, _), _), _)| r)
            .collect()
    }

    pub fn theoretical_is_monotone(&self) -> bool {
        self.theoretical_bound.windows(2).all(|w| w[0] <= w[1])
    }
}

/// The radii used by the reference verification: {0.1, 0.5, 1, 2, 5} times
/// a_hat * sqrt(tau).
pub fn default_r_grid(a_hat: f64, tau: f64) -> Vec<f64> {
    [0.1, 0.5, 1.0, 2.0, 5.0]
        .iter()
        .map(|&s| s * a_hat * tau.sqrt())
        .collect()
}

/// FNV-1a over the little-endian bytes of the latent values; identifies the
/// max-ratio pair without storing it.
fn digest(values: &Array2<f64>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values.iter() {
        for b in v.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    let shared = a.len().min(b.len());
    let mut m = 0.0f64;
    for i in 0..shared {
        m = m.max((a[i] - b[i]).abs());
    }
    // Unmatched tail samples count against the difference in full.
    for &v in &a[shared..] {
        m = m.max(v.abs());
    }
    for &v in &b[shared..] {
        m = m.max(v.abs());
    }
    m
}

fn draw_pair(
    rng: &mut impl Rng,
    pool: &[LatentCode],
    tau: f64,
) -> Result<(LatentCode, LatentCode), BoundError> {
    for _ in 0..100 {
        let z1 = &pool[rng.gen_range(0..pool.len())];
        let shape = z1.values.dim();
        let noise: Vec<f64> = (0..shape.0 * shape.1)
            .map(|_| rng.gen_range(-tau..=tau))
            .collect();
        let delta = Array2::from_shape_vec(shape, noise).expect("shape");
        if sup_norm(delta.as_slice().expect("contiguous")) == 0.0 {
            continue;
        }
        let z2 = LatentCode::new(&z1.values + &delta);
        return Ok((z1.clone(), z2));
    }
    Err(BoundError::DegeneratePair)
}

/// a_hat = max over sampled pairs of |D(z1) - D(z2)|_inf / |z1 - z2|_inf,
/// with z1 drawn from the pool and z2 inside its tau-ball.
pub fn estimate_lipschitz(
    decoder: &dyn LatentDecoder,
    z1_pool: &[LatentCode],
    n_pairs: usize,
    tau: f64,
    master_seed: u64,
) -> Result<LipschitzEstimate, BoundError> {
    assert!(n_pairs >= 100, "need at least 100 pairs");
    assert!(tau > 0.0, "tau must be positive");
    if z1_pool.is_empty() {
        return Err(BoundError::EmptyPool);
    }
    let mut rng = seed::rng(master_seed, "lipschitz");
    let mut a_hat = 0.0f64;
    let mut max_pair = (0u64, 0u64);
    for _ in 0..n_pairs {
        let (z1, z2) = draw_pair(&mut rng, z1_pool, tau)?;
        let d1 = decoder.decode_latent(&z1)?;
        let d2 = decoder.decode_latent(&z2)?;
        let denom = sup_diff(
            z1.values.as_slice().expect("contiguous"),
            z2.values.as_slice().expect("contiguous"),
        );
        let ratio = sup_diff(&d1, &d2) / denom;
        if ratio > a_hat {
            a_hat = ratio;
            max_pair = (digest(&z1.values), digest(&z2.values));
        }
    }
    Ok(LipschitzEstimate {
        a_hat,
        n_pairs,
        max_ratio_pair: max_pair,
    })
}

/// Monte-Carlo verification of the bound on a radius grid.
pub fn verify_bound(
    decoder: &dyn LatentDecoder,
    tau: f64,
    a_hat: f64,
    r_grid: &[f64],
    n_trials: usize,
    master_seed: u64,
    z1_pool: &[LatentCode],
) -> Result<BoundReport, BoundError> {
    assert!(!r_grid.is_empty(), "radius grid must be non-empty");
    assert!(r_grid.iter().all(|&r| r > 0.0), "radii must be positive");
    assert!(n_trials >= 1000, "need at least 1000 trials");
    if z1_pool.is_empty() {
        return Err(BoundError::EmptyPool);
    }
    let mut rng = seed::rng(master_seed, "bound-trials");
    let mut counts = vec![0usize; r_grid.len()];
    for _ in 0..n_trials {
        let (z1, z2) = draw_pair(&mut rng, z1_pool, tau)?;
        let d = sup_diff(&decoder.decode_latent(&z1)?, &decoder.decode_latent(&z2)?);
        for (c, &r) in counts.iter_mut().zip(r_grid) {
            if d <= r {
                *c += 1;
            }
        }
    }
    let n = n_trials as f64;
    let empirical_prob: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let theoretical_bound: Vec<f64> = r_grid
        .iter()
        .map(|&r| 1.0 - (a_hat * a_hat * tau / (r * r)).min(1.0))
        .collect();
    let margins: Vec<f64> = empirical_prob
        .iter()
        .map(|&p| 1.96 * (p * (1.0 - p) / n).sqrt())
        .collect();
    let violations: Vec<f64> = r_grid
        .iter()
        .zip(&empirical_prob)
        .zip(&theoretical_bound)
        .filter(|((_, &p), &b)| p < b)
        .map(|((&r, _), _)| r)
        .collect();
    let report = BoundReport {
        tau,
        a_hat,
        n_trials,
        r_grid: r_grid.to_vec(),
        empirical_prob,
        theoretical_bound,
        violations,
        margins,
    };
    assert!(
        report.empirical_prob.iter().all(|p| (0.0..=1.0).contains(p)),
        "probabilities in range"
    );
    assert!(
        report
            .theoretical_bound
            .iter()
            .all(|b| (0.0..=1.0).contains(b)),
        "bound values in range"
    );
    Ok(report)
}

/// Analytic stub: decodes a latent to its own flattened values.
pub struct IdentityDecoder;

impl LatentDecoder for IdentityDecoder {
    fn decode_latent(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        Ok(z.values.iter().copied().collect())
    }
}

/// Analytic stub: a pure gain, Lipschitz constant |factor|.
pub struct ScalingDecoder {
    pub factor: f64,
}

impl LatentDecoder for ScalingDecoder {
    fn decode_latent(&self, z: &LatentCode) -> Result<Vec<f64>, ModelError> {
        Ok(z.values.iter().map(|&v| v * self.factor).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(seed: u64) -> Vec<LatentCode> {
        let mut rng = seed::rng(seed, "pool");
        (0..6)
            .map(|_| LatentCode::new(Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0))))
            .collect()
    }

    #[test]
    fn identity_decoder_estimates_one() {
        let est = estimate_lipschitz(&IdentityDecoder, &pool(1), 200, 0.5, 7).unwrap();
        assert!((est.a_hat - 1.0).abs() < 1e-9, "a_hat {}", est.a_hat);
        assert_eq!(est.n_pairs, 200);
    }

    #[test]
    fn scaling_decoder_estimates_its_gain() {
        let est =
            estimate_lipschitz(&ScalingDecoder { factor: 2.0 }, &pool(1), 200, 0.5, 7).unwrap();
        assert!((est.a_hat - 2.0).abs() < 1e-9, "a_hat {}", est.a_hat);
        let neg =
            estimate_lipschitz(&ScalingDecoder { factor: -3.0 }, &pool(1), 200, 0.5, 7).unwrap();
        assert!((neg.a_hat - 3.0).abs() < 1e-9);
    }

    #[test]
    fn estimate_is_a_running_maximum_in_n_pairs() {
        let small = estimate_lipschitz(&ScalingDecoder { factor: 1.7 }, &pool(2), 100, 0.5, 3)
            .unwrap();
        let large = estimate_lipschitz(&ScalingDecoder { factor: 1.7 }, &pool(2), 300, 0.5, 3)
            .unwrap();
        assert!(large.a_hat >= small.a_hat);
    }

    #[test]
    fn estimate_is_seeded() {
        let a = estimate_lipschitz(&IdentityDecoder, &pool(1), 150, 0.5, 9).unwrap();
        let b = estimate_lipschitz(&IdentityDecoder, &pool(1), 150, 0.5, 9).unwrap();
        assert_eq!(a.a_hat.to_bits(), b.a_hat.to_bits());
        assert_eq!(a.max_ratio_pair, b.max_ratio_pair);
        assert_ne!(a.max_ratio_pair, (0, 0));
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(matches!(
            estimate_lipschitz(&IdentityDecoder, &[], 100, 0.5, 1),
            Err(BoundError::EmptyPool)
        ));
    }

    #[test]
    fn identity_bound_holds_with_probability_one_past_tau() {
        let tau = 0.5;
        let report = verify_bound(
            &IdentityDecoder,
            tau,
            1.0,
            &[0.6, 1.0, 2.0],
            1000,
            5,
            &pool(3),
        )
        .unwrap();
        // |D(z1) - D(z2)|_inf = |delta|_inf <= tau < every radius here.
        assert!(report.empirical_prob.iter().all(|&p| p == 1.0));
        assert!(report.violations.is_empty());
        assert!(report.violations_beyond_margin().is_empty());
        assert!(report.theoretical_is_monotone());
    }

    #[test]
    fn vacuous_regime_has_zero_bound() {
        let report = verify_bound(
            &IdentityDecoder,
            0.5,
            1.0,
            &[0.1, 0.5, 1.0],
            1000,
            5,
            &pool(3),
        )
        .unwrap();
        // a^2 tau / r^2 = 0.5 / 0.01 >= 1 at r = 0.1.
        assert_eq!(report.theoretical_bound[0], 0.0);
        assert!(report.theoretical_is_monotone());
        for (p, m) in report.empirical_prob.iter().zip(&report.margins) {
            assert!((0.0..=1.0).contains(p));
            assert!(*m >= 0.0 && *m < 0.05);
        }
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_r_grid(2.0, 0.25);
        assert_eq!(grid.len(), 5);
        assert!((grid[0] - 0.1 * 2.0 * 0.5).abs() < 1e-12);
        assert!((grid[4] - 5.0 * 2.0 * 0.5).abs() < 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn digests_differ_for_different_arrays() {
        let a = Array2::from_elem((2, 2), 0.5);
        let mut b = a.clone();
        b[[0, 0]] = 0.25;
        assert_ne!(digest(&a), digest(&b));
        assert_eq!(digest(&a), digest(&a.clone()));
    }
}
