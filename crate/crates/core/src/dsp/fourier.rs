//! Small Fourier helpers shared by the analysis paths. Frames here are short
//! (a few hundred samples), so direct DFT matrices are fast enough and keep
//! everything trivially differentiable where needed.

use ndarray::Array2;

/// Real-DFT basis matrices of shape (bins, frame_len) with bins =
/// frame_len/2 + 1. Row k holds cos/sin at frequency k.
pub fn dft_matrices(frame_len: usize) -> (Array2<f64>, Array2<f64>) {
    let bins = frame_len / 2 + 1;
    let mut cos = Array2::zeros((bins, frame_len));
    let mut sin = Array2::zeros((bins, frame_len));
    for k in 0..bins {
        for n in 0..frame_len {
            let phase = -2.0 * std::f64::consts::PI * (k * n) as f64 / frame_len as f64;
            cos[[k, n]] = phase.cos();
            sin[[k, n]] = phase.sin();
        }
    }
    (cos, sin)
}

/// Periodic Hann window of length n.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_bin_centered_cosine_is_a_spike() {
        let n = 64;
        let k0 = 5;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (k0 * i) as f64 / n as f64).cos())
            .collect();
        let (cos, sin) = dft_matrices(n);
        for k in 0..n / 2 + 1 {
            let re: f64 = (0..n).map(|i| cos[[k, i]] * x[i]).sum();
            let im: f64 = (0..n).map(|i| sin[[k, i]] * x[i]).sum();
            let mag = (re * re + im * im).sqrt();
            if k == k0 {
                assert!((mag - n as f64 / 2.0).abs() < 1e-9);
            } else {
                assert!(mag < 1e-9, "leak at bin {k}: {mag}");
            }
        }
    }

    #[test]
    fn hann_endpoints_and_peak() {
        let w = hann_window(8);
        assert!(w[0].abs() < 1e-12);
        assert!((w[4] - 1.0).abs() < 1e-12);
    }
}
