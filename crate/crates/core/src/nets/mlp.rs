use ndgrad::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::layer::{SineStack, StackShape, StackVars};
use crate::error::{LiftError, Result};
use crate::rng::Rng;

/// How coordinates are fed to the first layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputMap {
    /// Coordinates used as given.
    Identity,
    /// `[0, 1]` coordinates mapped to `[-1, 1]`.
    #[default]
    Centered,
}

/// A single coordinate network over the whole domain: SIREN when `gamma = 1`
/// without residuals, ReLIFT otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub shape: StackShape,
    pub input_map: InputMap,
    pub stack: SineStack,
}

const CHUNK: usize = 8192;

impl Mlp {
    pub fn new(shape: StackShape, input_map: InputMap, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            stack: SineStack::init(&shape, None, rng)?,
            shape,
            input_map,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.stack.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stack.params_mut()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> StackVars {
        self.stack.bind(tape, trainable)
    }

    fn map_input(&self, tape: &mut Tape, coords: Var) -> Result<Var> {
        Ok(match self.input_map {
            InputMap::Identity => coords,
            InputMap::Centered => {
                let two = tape.scale(coords, 2.0);
                let one = tape.constant(Tensor::scalar(1.0));
                tape.sub(two, one)?
            }
        })
    }

    /// `coords` is `[n, in_dim]`; returns `[n, out_dim]`.
    pub fn forward(&self, tape: &mut Tape, vars: &StackVars, coords: Var) -> Result<Var> {
        let x = self.map_input(tape, coords)?;
        self.stack.forward(tape, vars, x, None)
    }

    /// Forward pass that also returns every sine layer's activations.
    pub fn forward_with_hidden(
        &self,
        tape: &mut Tape,
        vars: &StackVars,
        coords: Var,
    ) -> Result<(Var, Vec<Var>)> {
        let x = self.map_input(tape, coords)?;
        self.stack.forward_with_hidden(tape, vars, x, None)
    }

    /// Evaluates the network on `[n, in_dim]` coordinates without tracking.
    pub fn predict(&self, coords: &Tensor) -> Result<Tensor> {
        let d = self.shape.in_dim;
        if coords.rank() != 2 || coords.shape()[1] != d {
            return Err(LiftError::Shape(format!(
                "coordinates {:?} do not match input dimension {d}",
                coords.shape()
            )));
        }
        let n = coords.shape()[0];
        let c = self.shape.out_dim;
        let mut out = Vec::with_capacity(n * c);
        for start in (0..n).step_by(CHUNK) {
            let len = CHUNK.min(n - start);
            let chunk = Tensor::new(&[len, d], coords.data()[start * d..(start + len) * d].to_vec())?;
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape, false);
            let x = tape.constant(chunk);
            let y = self.forward(&mut tape, &vars, x)?;
            out.extend_from_slice(tape.value(y).data());
        }
        Ok(Tensor::new(&[n, c], out)?)
    }
}

/// A plain SIREN with `depth - 1` sine layers of `width` units.
pub fn build_siren(
    in_dim: usize,
    out_dim: usize,
    depth: usize,
    width: usize,
    omega0: f64,
    rng: &mut Rng,
) -> Result<Mlp> {
    build(in_dim, out_dim, depth, width, omega0, 1.0, false, rng)
}

/// ReLIFT: first-layer frequencies scaled by `gamma` and residual hidden layers.
pub fn build_relift(
    in_dim: usize,
    out_dim: usize,
    depth: usize,
    width: usize,
    omega0: f64,
    gamma: f64,
    rng: &mut Rng,
) -> Result<Mlp> {
    build(in_dim, out_dim, depth, width, omega0, gamma, true, rng)
}

#[allow(clippy::too_many_arguments)]
fn build(
    in_dim: usize,
    out_dim: usize,
    depth: usize,
    width: usize,
    omega0: f64,
    gamma: f64,
    residual: bool,
    rng: &mut Rng,
) -> Result<Mlp> {
    if depth < 2 {
        return Err(LiftError::Config(format!("depth must be >= 2, got {depth}")));
    }
    let shape = StackShape {
        in_dim,
        out_dim,
        hidden_layers: depth - 1,
        width,
        first_omega: omega0,
        hidden_omega: omega0,
        gamma,
        residual,
    };
    Mlp::new(shape, InputMap::Centered, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    /// Direct formula: z0 = sin(w0 g (W0 x + b0)), z_l = sin(w0 (W_l z + b_l)) [+ z],
    /// written with plain loops.
    fn reference(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = match mlp.input_map {
            InputMap::Identity => x.to_vec(),
            InputMap::Centered => x.iter().map(|v| 2.0 * v - 1.0).collect(),
        };
        for layer in &mlp.stack.layers {
            let (fi, fo) = (layer.dense.fan_in(), layer.dense.fan_out());
            let w = layer.dense.weight.data();
            let b = layer.dense.bias.data();
            let mut next = vec![0.0; fo];
            for o in 0..fo {
                let mut acc = b[o];
                for i in 0..fi {
                    acc += h[i] * w[i * fo + o];
                }
                next[o] = (layer.omega0 * layer.gamma * acc).sin();
                if layer.residual {
                    next[o] += h[o];
                }
            }
            h = next;
        }
        let (fi, fo) = (mlp.stack.output.fan_in(), mlp.stack.output.fan_out());
        (0..fo)
            .map(|o| {
                mlp.stack.output.bias.data()[o]
                    + (0..fi)
                        .map(|i| h[i] * mlp.stack.output.weight.data()[i * fo + o])
                        .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn matches_direct_formula() {
        let mut rng = rng_for(3, 1);
        for mlp in [
            build_siren(2, 3, 4, 16, 30.0, &mut rng).unwrap(),
            build_relift(2, 3, 4, 16, 30.0, 2.0, &mut rng).unwrap(),
        ] {
            let coords = Tensor::from_fn(&[5, 2], |i| (i as f64 * 0.137) % 1.0);
            let y = mlp.predict(&coords).unwrap();
            for r in 0..5 {
                let expect = reference(&mlp, &coords.data()[2 * r..2 * r + 2]);
                for c in 0..3 {
                    assert!((y.at(&[r, c]) - expect[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relift_zero_hidden_weights_telescope() {
        let mut rng = rng_for(5, 1);
        let mut mlp = build_relift(1, 1, 4, 8, 30.0, 2.0, &mut rng).unwrap();
        for l in &mut mlp.stack.layers[1..] {
            l.dense.weight.data_mut().fill(0.0);
            l.dense.bias.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let vars = mlp.bind(&mut tape, false);
        let x = tape.constant(Tensor::from_fn(&[6, 1], |i| i as f64 / 5.0));
        let (_, hidden) = mlp.forward_with_hidden(&mut tape, &vars, x).unwrap();
        for h in &hidden[1..] {
            assert_eq!(tape.value(*h), tape.value(hidden[0]));
        }
    }

    #[test]
    fn depth_below_two_rejected() {
        assert!(build_siren(1, 1, 1, 8, 30.0, &mut rng_for(0, 1)).is_err());
    }
}
