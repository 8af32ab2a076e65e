use ndgrad::{Tape, Tensor, Var};
use rand::Rng as _;

use crate::error::{LiftError, Result};
use crate::rng::Rng;

/// Affine map. `weight` is `[.., in, out]`, `bias` is `[.., 1, out]`; the
/// optional leading axis stacks independent copies (one per region).
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl Dense {
    pub fn zeros(copies: Option<usize>, fan_in: usize, fan_out: usize) -> Self {
        let (w, b) = match copies {
            Some(r) => (vec![r, fan_in, fan_out], vec![r, 1, fan_out]),
            None => (vec![fan_in, fan_out], vec![1, fan_out]),
        };
        Self {
            weight: Tensor::zeros(&w),
            bias: Tensor::zeros(&b),
        }
    }

    /// Weights uniform in `±weight_bound`, biases uniform in `±1/sqrt(fan_in)`.
    pub fn uniform(
        copies: Option<usize>,
        fan_in: usize,
        fan_out: usize,
        weight_bound: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut d = Self::zeros(copies, fan_in, fan_out);
        let bias_bound = 1.0 / (fan_in as f64).sqrt();
        for v in d.weight.data_mut() {
            *v = rng.gen_range(-weight_bound..=weight_bound);
        }
        for v in d.bias.data_mut() {
            *v = rng.gen_range(-bias_bound..=bias_bound);
        }
        d
    }

    pub fn fan_in(&self) -> usize {
        let s = self.weight.shape();
        s[s.len() - 2]
    }

    pub fn fan_out(&self) -> usize {
        *self.weight.shape().last().expect("weight has rank >= 2")
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> DenseVars {
        let put = |tape: &mut Tape, t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        DenseVars {
            weight: put(tape, &self.weight),
            bias: put(tape, &self.bias),
        }
    }
}

/// `h @ W + b`, batched over the leading axis when `h` and `W` are rank 3.
pub fn affine(tape: &mut Tape, h: Var, dv: DenseVars) -> Result<Var> {
    shifted_affine(tape, h, dv, None)
}

/// `h @ W + (b + shift)`. The shift joins the bias before broadcasting.
fn shifted_affine(tape: &mut Tape, h: Var, dv: DenseVars, shift: Option<Var>) -> Result<Var> {
    let z = if tape.shape(h).len() == 3 && tape.shape(dv.weight).len() == 3 {
        tape.matmul_t(h, dv.weight, false, false)?
    } else {
        tape.matmul(h, dv.weight)?
    };
    let b = match shift {
        Some(s) => tape.add(dv.bias, s)?,
        None => dv.bias,
    };
    Ok(tape.add(z, b)?)
}

/// One sinusoidal layer `sin(omega * gamma * (W h + b + shift))`, plus `h`
/// when residual.
#[derive(Clone, Debug, PartialEq)]
pub struct SineLayer {
    pub dense: Dense,
    pub omega0: f64,
    /// Input frequency scale; 1 for hidden layers.
    pub gamma: f64,
    pub residual: bool,
}

impl SineLayer {
    pub fn new(dense: Dense, omega0: f64, gamma: f64, residual: bool) -> Result<Self> {
        if residual && dense.fan_in() != dense.fan_out() {
            return Err(LiftError::Config(format!(
                "residual sine layer needs equal widths, got {} -> {}",
                dense.fan_in(),
                dense.fan_out()
            )));
        }
        if omega0 <= 0.0 || gamma <= 0.0 {
            return Err(LiftError::Config(format!(
                "frequencies must be positive (omega0 {omega0}, gamma {gamma})"
            )));
        }
        Ok(Self {
            dense,
            omega0,
            gamma,
            residual,
        })
    }

    pub fn effective_omega(&self) -> f64 {
        self.omega0 * self.gamma
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        dv: DenseVars,
        h: Var,
        shift: Option<Var>,
    ) -> Result<Var> {
        let pre = shifted_affine(tape, h, dv, shift)?;
        let act = tape.sin_act(pre, self.effective_omega());
        if self.residual {
            Ok(tape.add(act, h)?)
        } else {
            Ok(act)
        }
    }
}

/// Architecture of a stack of sine layers followed by a linear readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackShape {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Number of sine layers; the network depth counting the readout is one more.
    pub hidden_layers: usize,
    pub width: usize,
    pub first_omega: f64,
    pub hidden_omega: f64,
    pub gamma: f64,
    /// Residual connections on the sine layers after the first.
    pub residual: bool,
}

impl StackShape {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(LiftError::Config(format!(
                "network needs at least one sine layer and nonzero widths: {self:?}"
            )));
        }
        if !(self.first_omega > 0.0 && self.hidden_omega > 0.0 && self.gamma >= 1.0) {
            return Err(LiftError::Config(format!(
                "need omega0 > 0 and gamma >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sine layers plus linear readout, optionally stacked over regions.
#[derive(Clone, Debug, PartialEq)]
pub struct SineStack {
    pub layers: Vec<SineLayer>,
    pub output: Dense,
}

#[derive(Clone, Debug)]
pub struct StackVars {
    pub layers: Vec<DenseVars>,
    pub output: DenseVars,
}

impl StackVars {
    /// Vars in [`SineStack::params`] order.
    pub fn flat(&self) -> Vec<Var> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self.layers.iter().chain(std::iter::once(&self.output)) {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }
}

impl SineStack {
    /// SIREN initialization: first layer `U(±1/fan_in)`, later layers
    /// `U(±sqrt(6/fan_in)/omega)`.
    pub fn init(shape: &StackShape, copies: Option<usize>, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        let mut layers = Vec::with_capacity(shape.hidden_layers);
        let first = Dense::uniform(
            copies,
            shape.in_dim,
            shape.width,
            1.0 / shape.in_dim as f64,
            rng,
        );
        layers.push(SineLayer::new(first, shape.first_omega, shape.gamma, false)?);
        let hidden_bound = (6.0 / shape.width as f64).sqrt() / shape.hidden_omega;
        for _ in 1..shape.hidden_layers {
            let d = Dense::uniform(copies, shape.width, shape.width, hidden_bound, rng);
            layers.push(SineLayer::new(d, shape.hidden_omega, 1.0, shape.residual)?);
        }
        let output = Dense::uniform(copies, shape.width, shape.out_dim, hidden_bound, rng);
        Ok(Self { layers, output })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(&l.dense.weight);
            out.push(&l.dense.bias);
        }
        out.push(&self.output.weight);
        out.push(&self.output.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.dense.weight);
            out.push(&mut l.dense.bias);
        }
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> StackVars {
        StackVars {
            layers: self.layers.iter().map(|l| l.dense.bind(tape, trainable)).collect(),
            output: self.output.bind(tape, trainable),
        }
    }

    /// Rebinds from a flat list in [`SineStack::params`] order.
    pub fn vars_from(&self, flat: &[Var]) -> StackVars {
        let n = self.layers.len();
        StackVars {
            layers: (0..n)
                .map(|i| DenseVars {
                    weight: flat[2 * i],
                    bias: flat[2 * i + 1],
                })
                .collect(),
            output: DenseVars {
                weight: flat[2 * n],
                bias: flat[2 * n + 1],
            },
        }
    }

    /// Runs the stack, returning the readout and every sine layer's output.
    pub fn forward_with_hidden(
        &self,
        tape: &mut Tape,
        vars: &StackVars,
        input: Var,
        shifts: Option<&[Var]>,
    ) -> Result<(Var, Vec<Var>)> {
        if let Some(s) = shifts {
            if s.len() != self.layers.len() {
                return Err(LiftError::Config(format!(
                    "{} shift tensors for {} modulated layers",
                    s.len(),
                    self.layers.len()
                )));
            }
        }
        let mut h = input;
        let mut hidden = Vec::with_capacity(self.layers.len());
        for (i, (layer, dv)) in self.layers.iter().zip(&vars.layers).enumerate() {
            h = layer.forward(tape, *dv, h, shifts.map(|s| s[i]))?;
            hidden.push(h);
        }
        Ok((affine(tape, h, vars.output)?, hidden))
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &StackVars,
        input: Var,
        shifts: Option<&[Var]>,
    ) -> Result<Var> {
        Ok(self.forward_with_hidden(tape, vars, input, shifts)?.0)
    }

    pub fn width(&self) -> usize {
        self.layers[0].dense.fan_out()
    }

    pub fn out_dim(&self) -> usize {
        self.output.fan_out()
    }
}
