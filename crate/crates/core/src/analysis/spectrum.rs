//! Direct discrete Fourier transforms of short real signals.

use std::f64::consts::PI;

use num_complex::Complex64;

/// `X_k = sum_n x_n e^{-2 pi i k n / N}` at the requested bins.
pub fn dft_bins(x: &[f64], bins: &[usize]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return vec![Complex64::new(0.0, 0.0); bins.len()];
    }
    let twiddle: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64))
        .collect();
    bins.iter()
        .map(|&k| {
            let k = k % n;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for &v in x {
                acc += twiddle[idx] * v;
                idx += k;
                if idx >= n {
                    idx -= n;
                }
            }
            acc
        })
        .collect()
}

/// All `N` bins.
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let bins: Vec<usize> = (0..x.len()).collect();
    dft_bins(x, &bins)
}

/// Magnitudes of bins `0..=N/2`.
pub fn dft_spectrum(x: &[f64]) -> Vec<f64> {
    let bins: Vec<usize> = (0..=x.len() / 2).collect();
    dft_bins(x, &bins).iter().map(|c| c.norm()).collect()
}

/// `|sum |x|^2 - (1/N) sum |X|^2|`, zero up to rounding.
pub fn parseval_gap(x: &[f64]) -> f64 {
    let time: f64 = x.iter().map(|v| v * v).sum();
    let freq: f64 = dft(x).iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len().max(1) as f64;
    (time - freq).abs()
}

/// Bins in `0..=N/2` whose magnitude exceeds `rel` times the largest.
pub fn support_bins(x: &[f64], rel: f64) -> Vec<usize> {
    let mags = dft_spectrum(x);
    let peak = mags.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    (0..mags.len()).filter(|&k| mags[k] > rel * peak).collect()
}

/// DFT bin of angular frequency `omega` for `n` samples spanning a period
/// of length `span`.
pub fn bin_of(omega: f64, span: f64) -> f64 {
    omega * span / (2.0 * PI)
}
