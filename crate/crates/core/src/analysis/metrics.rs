use ndgrad::Tensor;

use crate::error::{LiftError, Result};

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LiftError::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    same_shape(pred, target)?;
    let n = pred.len().max(1) as f64;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / n)
}

/// Peak signal-to-noise ratio in dB; `+inf` for identical inputs.
pub fn psnr(pred: &Tensor, target: &Tensor, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(pred, target)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * (mse / (peak * peak)).log10()
    }
}

/// PSNR over the listed grid points only. `points` are row-major point
/// indices of a channels-last grid.
pub fn masked_psnr(pred: &Tensor, target: &Tensor, points: &[usize], peak: f64) -> Result<f64> {
    same_shape(pred, target)?;
    let c = *pred.shape().last().unwrap_or(&1);
    if points.is_empty() {
        return Err(LiftError::Config("no points to evaluate".into()));
    }
    let mut s = 0.0;
    for &p in points {
        for k in p * c..(p + 1) * c {
            let d = pred.data()[k] - target.data()[k];
            s += d * d;
        }
    }
    Ok(psnr_from_mse(s / (points.len() * c) as f64, peak))
}

/// Intersection over union of `value >= threshold`; two empty sets give 1.
pub fn iou(pred: &Tensor, target: &Tensor, threshold: f64) -> Result<f64> {
    same_shape(pred, target)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(target.data()) {
        let (a, b) = (a >= threshold, b >= threshold);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

const SSIM_WINDOW: usize = 8;

/// Mean SSIM of `[H, W, C]` images over all 8x8 windows (stride 1) and
/// channels, uniform weights, `K1 = 0.01`, `K2 = 0.03`.
pub fn ssim(pred: &Tensor, target: &Tensor, peak: f64) -> Result<f64> {
    same_shape(pred, target)?;
    let s = pred.shape();
    if s.len() != 3 || s[0] < SSIM_WINDOW || s[1] < SSIM_WINDOW {
        return Err(LiftError::Unsupported(format!(
            "SSIM needs [H, W, C] images of at least 8x8, got {s:?}"
        )));
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let (x, y) = (pred.data(), target.data());
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        for i in 0..=h - SSIM_WINDOW {
            for j in 0..=w - SSIM_WINDOW {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for di in 0..SSIM_WINDOW {
                    for dj in 0..SSIM_WINDOW {
                        let k = ((i + di) * w + j + dj) * c + ch;
                        let (a, b) = (x[k], y[k]);
                        sx += a;
                        sy += b;
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = (sxx / n - mx * mx).max(0.0);
                let vy = (syy / n - my * my).max(0.0);
                let cov = sxy / n - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
