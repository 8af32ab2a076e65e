//! Corruptions for inverse problems: missing pixels, low resolution and
//! photon-limited noise.

use ndgrad::Tensor;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::grid::SignalGrid;
use crate::error::{LiftError, Result};
use crate::rng::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    /// Withhold `ceil(fraction * points)` randomly chosen points.
    InpaintMask { fraction: f64, seed: u64 },
    /// Average-pool by an integer factor along every spatial axis.
    Downsample { factor: usize },
    /// `(Poisson(tau x) + Poisson(readout)) / tau`, clamped to `[0, 1]`.
    PhotonNoise { tau: f64, readout: f64, seed: u64 },
}

/// What a fit may see, and what it is judged against.
#[derive(Clone, Debug, PartialEq)]
pub struct Degraded {
    pub train: SignalGrid,
    /// Per grid point of `train`, whether the value is observed. `None`
    /// means every point is.
    pub observed: Option<Vec<bool>>,
    pub eval: SignalGrid,
}

impl Degraded {
    /// Row-major indices of the withheld points.
    pub fn withheld(&self) -> Vec<usize> {
        match &self.observed {
            Some(mask) => (0..mask.len()).filter(|&i| !mask[i]).collect(),
            None => Vec::new(),
        }
    }
}

impl Degradation {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LiftError::Config(m));
        match *self {
            Degradation::InpaintMask { fraction, .. } if !(fraction > 0.0 && fraction < 1.0) => {
                bad(format!("inpainting fraction {fraction} must lie in (0, 1)"))
            }
            Degradation::Downsample { factor } if factor < 2 => {
                bad(format!("downsampling factor {factor} must be at least 2"))
            }
            Degradation::PhotonNoise { tau, readout, .. } if !(tau > 0.0) || !(readout >= 0.0) => {
                bad(format!("photon noise needs tau > 0 and readout >= 0, got {tau}, {readout}"))
            }
            _ => Ok(()),
        }
    }
}

pub fn degrade(signal: &SignalGrid, d: &Degradation) -> Result<Degraded> {
    d.validate()?;
    let eval = signal.clone();
    match *d {
        Degradation::InpaintMask { fraction, seed } => {
            let n = signal.points();
            let hidden = ((fraction * n as f64).ceil() as usize).min(n);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(seed, stream::DEGRADE));
            let mut observed = vec![true; n];
            for &i in &order[..hidden] {
                observed[i] = false;
            }
            let c = signal.channels();
            let mut values = signal.values.clone();
            for (i, chunk) in values.data_mut().chunks_mut(c).enumerate() {
                if !observed[i] {
                    chunk.fill(0.0);
                }
            }
            Ok(Degraded {
                train: SignalGrid { values, ..signal.clone() },
                observed: Some(observed),
                eval,
            })
        }
        Degradation::Downsample { factor } => Ok(Degraded {
            train: downsample(signal, factor)?,
            observed: None,
            eval,
        }),
        Degradation::PhotonNoise { tau, readout, seed } => {
            let mut rng = rng_for(seed, stream::DEGRADE);
            let mut draw = |mean: f64| -> f64 {
                if mean > 0.0 {
                    Poisson::new(mean).expect("positive mean").sample(&mut rng)
                } else {
                    0.0
                }
            };
            let mut values = signal.values.clone();
            for v in values.data_mut() {
                let photons = draw(tau * v.max(0.0));
                let read = draw(readout);
                *v = ((photons + read) / tau).clamp(0.0, 1.0);
            }
            Ok(Degraded {
                train: SignalGrid { values, ..signal.clone() },
                observed: None,
                eval,
            })
        }
    }
}

/// Box-filter downsampling by `factor` along every spatial axis.
pub fn downsample(signal: &SignalGrid, factor: usize) -> Result<SignalGrid> {
    let spatial = signal.spatial();
    if factor == 0 || spatial.iter().any(|&n| n % factor != 0) {
        return Err(LiftError::Config(format!(
            "downsampling factor {factor} does not divide grid {spatial:?}"
        )));
    }
    let mut shape: Vec<usize> = spatial.iter().map(|&n| n / factor).collect();
    shape.push(signal.channels());
    let factors = vec![factor; spatial.len()];
    let pooled = ndgrad::kernels::sum_pool(&signal.values, &factors)?;
    let scale = 1.0 / (factor.pow(spatial.len() as u32)) as f64;
    let values = Tensor::new(&shape, pooled.data().iter().map(|v| v * scale).collect())?;
    SignalGrid::new(values, format!("{} /{factor}", signal.source))
}
