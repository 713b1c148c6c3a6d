//! Gaussian kernel density estimation.

use super::DspError;

/// Silverman's rule-of-thumb bandwidth: 0.9 min(sd, iqr/1.34) n^(-1/5),
/// with a floor to stay positive on degenerate samples.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, DspError> {
    if values.is_empty() {
        return Err(DspError::EmptyValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let idx = p * (sorted.len() - 1) as f64;
        let lo = idx.floor() as usize;
        let hi = idx.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (idx - lo as f64)
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bw = 0.9 * spread * n.powf(-0.2);
    Ok(bw.max(1e-9))
}

/// A grid spanning the data ± `margin_bandwidths` bandwidths.
pub fn kde_grid(values: &[f64], bandwidth: f64, points: usize, margin_bandwidths: f64) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - margin_bandwidths * bandwidth;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + margin_bandwidths * bandwidth;
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Gaussian-kernel density estimate evaluated on `grid`.
pub fn kde_density(values: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>, DspError> {
    if values.is_empty() {
        return Err(DspError::EmptyValues);
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(DspError::InvalidBandwidth(bandwidth));
    }
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let u = (g - v) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn trapezoid(y: &[f64], x: &[f64]) -> f64 {
        (1..x.len())
            .map(|i| 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]))
            .sum()
    }

    #[test]
    fn single_value_peaks_at_nearest_grid_point() {
        let grid: Vec<f64> = (0..101).map(|i| i as f64 / 10.0 - 5.0).collect();
        let d = kde_density(&[1.23], 0.5, &grid).unwrap();
        let argmax = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let nearest = grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1.23).abs().partial_cmp(&(b.1 - 1.23).abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn symmetric_data_symmetric_density() {
        let grid: Vec<f64> = (0..81).map(|i| i as f64 / 10.0 - 4.0).collect();
        let d = kde_density(&[-1.0, 1.0], 0.7, &grid).unwrap();
        for i in 0..d.len() {
            let j = d.len() - 1 - i;
            assert!((d[i] - d[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let bw = silverman_bandwidth(&values).unwrap();
        let d = kde_density(&values, bw, &[0.0]).unwrap();
        assert!((d[0] - 0.3989).abs() < 0.05, "density at 0 = {}", d[0]);
    }

    #[test]
    fn integrates_to_one() {
        let values = vec![-2.0, -0.5, 0.0, 0.3, 1.7, 2.2, 2.3];
        let bw = 0.4;
        let grid = kde_grid(&values, bw, 2001, 5.0);
        let d = kde_density(&values, bw, &grid).unwrap();
        let integral = trapezoid(&d, &grid);
        assert!((0.99..=1.01).contains(&integral), "integral = {integral}");
        assert!(d.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn errors_declared() {
        assert_eq!(kde_density(&[], 1.0, &[0.0]), Err(DspError::EmptyValues));
        assert_eq!(kde_density(&[1.0], 0.0, &[0.0]), Err(DspError::InvalidBandwidth(0.0)));
        assert_eq!(silverman_bandwidth(&[]), Err(DspError::EmptyValues));
    }
}
