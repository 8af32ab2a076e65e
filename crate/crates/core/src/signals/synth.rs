//! Deterministic synthetic signals.

use std::f64::consts::PI;

use ndgrad::Tensor;
use rand::Rng as _;

use super::grid::{Sampling, SignalGrid};
use crate::error::{LiftError, Result};
use crate::rng::{rng_for_step, stream};

/// `f(x) = 2 R((sin 3 pi x + sin 5 pi x + sin 7 pi x + sin 9 pi x) / 2)` with
/// `R` rounding half away from zero.
pub fn spectral_fn(x: f64) -> f64 {
    let s: f64 = [3.0, 5.0, 7.0, 9.0].iter().map(|k| (k * PI * x).sin()).sum();
    2.0 * (s / 2.0).round()
}

/// Angular frequencies present in [`spectral_fn`] before rounding.
pub const SPECTRAL_PROBES: [f64; 4] = [3.0 * PI, 5.0 * PI, 7.0 * PI, 9.0 * PI];

/// `n` samples of [`spectral_fn`] over one period `[-1, 1)`. Probe
/// frequency `k pi` sits exactly on DFT bin `k`.
pub fn spectral_target(n: usize) -> Result<SignalGrid> {
    if n < 2 {
        return Err(LiftError::Config("spectral target needs at least 2 samples".into()));
    }
    let grid = SignalGrid::new(Tensor::zeros(&[n, 1]), "spectral target")?
        .with_sampling(Sampling::Periodic { lo: -1.0, hi: 1.0 });
    let values = Tensor::from_fn(&[n, 1], |i| spectral_fn(grid.coordinate(i, n)));
    Ok(SignalGrid { values, ..grid })
}

/// A smooth RGB image: a flat background plus a few Gaussian blobs of
/// random colour, clamped to `[0, 1]`. Index `index` picks the instance.
pub fn blob_image(size: usize, index: u64, seed: u64) -> Result<SignalGrid> {
    let mut rng = rng_for_step(seed, stream::DATA, index);
    let background: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..0.6));
    let count = rng.gen_range(2..=4);
    let blobs: Vec<([f64; 2], f64, [f64; 3])> = (0..count)
        .map(|_| {
            let c = [rng.gen_range(0.15..0.85), rng.gen_range(0.15..0.85)];
            let sigma = rng.gen_range(0.1..0.25);
            let col = std::array::from_fn(|_| rng.gen_range(-0.5..0.6));
            (c, sigma, col)
        })
        .collect();
    let n = size.max(2);
    let values = Tensor::from_fn(&[n, n, 3], |i| {
        let (p, ch) = (i / 3, i % 3);
        let (y, x) = ((p / n) as f64 / (n - 1) as f64, (p % n) as f64 / (n - 1) as f64);
        let mut v = background[ch];
        for (c, s, col) in &blobs {
            let d2 = (y - c[0]).powi(2) + (x - c[1]).powi(2);
            v += col[ch] * (-d2 / (2.0 * s * s)).exp();
        }
        v.clamp(0.0, 1.0)
    });
    SignalGrid::new(values, format!("blobs#{index}"))
}

/// A `size x size` RGB test card with smooth gradients, rings, an edge and
/// a patch of fine stripes, so both low and high frequencies are present.
pub fn test_image(size: usize) -> Result<SignalGrid> {
    let n = size.max(2);
    let values = Tensor::from_fn(&[n, n, 3], |i| {
        let (p, ch) = (i / 3, i % 3);
        let y = (p / n) as f64 / (n - 1) as f64;
        let x = (p % n) as f64 / (n - 1) as f64;
        let r = ((x - 0.35).powi(2) + (y - 0.4).powi(2)).sqrt();
        let rings = 0.5 + 0.5 * (2.0 * PI * 4.0 * r).cos() * (-3.0 * r).exp();
        let v = match ch {
            0 => 0.55 * rings + 0.35 * x,
            1 => 0.5 * (1.0 - y) + 0.3 * (2.0 * PI * (x + 0.5 * y)).sin().abs(),
            _ => 0.3 + 0.4 * (PI * 3.0 * x * y).sin().powi(2),
        };
        let square = if (0.6..0.85).contains(&x) && (0.55..0.85).contains(&y) {
            0.25 * (2.0 * PI * 6.0 * (x + y)).sin()
        } else {
            0.0
        };
        (v + square).clamp(0.0, 1.0)
    });
    SignalGrid::new(values, "test card")
}

/// A linear ramp along the first axis of a 1-D grid.
pub fn ramp(n: usize) -> Result<SignalGrid> {
    SignalGrid::new(
        Tensor::from_fn(&[n, 1], |i| i as f64 / (n.max(2) - 1) as f64),
        "ramp",
    )
}

/// A decaying chirp in `[-1, 1]`, `n` samples.
pub fn chirp(n: usize) -> Result<SignalGrid> {
    let values = Tensor::from_fn(&[n, 1], |i| {
        let t = i as f64 / (n.max(2) - 1) as f64;
        0.8 * (2.0 * PI * (5.0 * t + 40.0 * t * t)).sin() * (1.0 - 0.5 * t)
    });
    SignalGrid::new(values, "chirp")
}

/// Binary occupancy of a few random spheres and boxes in a `size^3` cube.
pub fn shapes_volume(size: usize, seed: u64) -> Result<SignalGrid> {
    let mut rng = rng_for_step(seed, stream::DATA, 0);
    let spheres: Vec<([f64; 3], f64)> = (0..2)
        .map(|_| {
            let c = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
            (c, rng.gen_range(0.12..0.25))
        })
        .collect();
    let (lo, hi): ([f64; 3], [f64; 3]) = {
        let lo = std::array::from_fn(|_| rng.gen_range(0.1..0.4));
        let hi = std::array::from_fn(|k| lo[k] + rng.gen_range(0.2..0.45));
        (lo, hi)
    };
    let n = size.max(2);
    let values = Tensor::from_fn(&[n, n, n, 1], |i| {
        let p = [i / (n * n), (i / n) % n, i % n].map(|v| v as f64 / (n - 1) as f64);
        let in_sphere = spheres.iter().any(|(c, r)| {
            (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>() <= r * r
        });
        let in_box = (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k]);
        if in_sphere || in_box {
            1.0
        } else {
            0.0
        }
    });
    SignalGrid::new(values, "spheres and box")
}
