//! Metrics, the harmonic expansion of small sine networks, spectra and the
//! spectral-bias tracker.

mod activations;
pub mod bessel;
mod bias;
mod expansion;
mod metrics;
pub mod plot;
pub mod spectrum;

pub use activations::{activation_histograms, histograms_csv, Histogram};
pub use bessel::bessel_j;
pub use bias::{probe_bins, probe_errors, track_spectral_bias, SpectralTrace};
pub use expansion::{bessel_expand, expansion_vs_direct, harmonic_net, HarmonicExpansion};
pub use metrics::{iou, masked_psnr, mse, psnr, psnr_from_mse, ssim};
pub use spectrum::{dft, dft_bins, dft_spectrum, parseval_gap, support_bins};
