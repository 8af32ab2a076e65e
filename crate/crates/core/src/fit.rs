//! Fitting one coordinate network to one signal with full-batch Adam.

use std::time::Instant;

use ndgrad::{Adam, Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{LiftError, Result};
use crate::meta::mse;
use crate::nets::Mlp;
use crate::signals::SignalGrid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: u64,
    pub lr: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { steps: 500, lr: 1e-4 }
    }
}

/// Coordinates and target values a fit trains on.
#[derive(Clone, Debug, PartialEq)]
pub struct FitData {
    pub coords: Tensor,
    pub values: Tensor,
}

impl FitData {
    /// Every grid point.
    pub fn from_grid(signal: &SignalGrid) -> Self {
        Self {
            coords: signal.coords(),
            values: signal.flat_values(),
        }
    }

    /// Only the points flagged as observed.
    pub fn observed(signal: &SignalGrid, observed: &[bool]) -> Result<Self> {
        if observed.len() != signal.points() {
            return Err(LiftError::Shape(format!(
                "mask of {} entries for {} points",
                observed.len(),
                signal.points()
            )));
        }
        let (d, c) = (signal.dims(), signal.channels());
        let coords = signal.coords();
        let values = signal.flat_values();
        let keep: Vec<usize> = (0..observed.len()).filter(|&i| observed[i]).collect();
        if keep.is_empty() {
            return Err(LiftError::Config("no observed points to fit".into()));
        }
        let pick = |t: &Tensor, w: usize| -> Result<Tensor> {
            let data = keep.iter().flat_map(|&i| t.data()[i * w..(i + 1) * w].iter().copied()).collect();
            Ok(Tensor::new(&[keep.len(), w], data)?)
        };
        Ok(Self {
            coords: pick(&coords, d)?,
            values: pick(&values, c)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitRow {
    pub step: u64,
    pub loss: f64,
    pub wall_ms: f64,
}

pub const FIT_LOG_HEADER: &str = "step,loss,wall_ms";

impl FitRow {
    pub fn csv(&self) -> String {
        format!("{},{:.10e},{:.3}", self.step, self.loss, self.wall_ms)
    }
}

/// Training state of one network, resumable from a checkpoint.
#[derive(Clone, Debug)]
pub struct Fitter {
    pub net: Mlp,
    pub adam: Adam,
    pub step: u64,
}

impl Fitter {
    pub fn new(net: Mlp, lr: f64) -> Self {
        Self {
            net,
            adam: Adam::new(lr),
            step: 0,
        }
    }

    /// One Adam step on the full batch. The logged loss is measured before
    /// the update.
    pub fn step(&mut self, data: &FitData) -> Result<FitRow> {
        let start = Instant::now();
        let mut tape = Tape::new();
        let vars = self.net.bind(&mut tape, true);
        let x = tape.constant(data.coords.clone());
        let y = tape.constant(data.values.clone());
        let pred = self.net.forward(&mut tape, &vars, x)?;
        let loss = mse(&mut tape, pred, y)?;
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(LiftError::Numeric(format!("non-finite loss at step {}", self.step)));
        }
        let wrt = vars.flat();
        let grads = tape.gradients(loss, &wrt, false)?;
        let grads: Vec<Tensor> = grads.iter().map(|&g| tape.value(g).clone()).collect();
        self.adam.step(&mut self.net.params_mut(), &grads)?;
        self.step += 1;
        Ok(FitRow {
            step: self.step,
            loss: value,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs until `steps` total steps, calling `on_step` after each.
    pub fn run(
        &mut self,
        data: &FitData,
        steps: u64,
        mut on_step: impl FnMut(&Self, &FitRow) -> Result<()>,
    ) -> Result<Vec<FitRow>> {
        let mut log = Vec::new();
        while self.step < steps {
            let row = self.step(data)?;
            on_step(self, &row)?;
            log.push(row);
        }
        Ok(log)
    }
}

/// Fits `net` to `data` for `cfg.steps` steps.
pub fn fit(net: Mlp, data: &FitData, cfg: &FitConfig) -> Result<(Mlp, Vec<FitRow>)> {
    let mut f = Fitter::new(net, cfg.lr);
    let log = f.run(data, cfg.steps, |_, _| Ok(()))?;
    Ok((f.net, log))
}
