//! Central finite-difference gradient checking.
//!
//! The numerical side only ever reads forward values. Inputs are still
//! recorded as leaves so that functions which take inner gradients (a
//! differentiated SGD step, say) compute the same forward value.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Per input: `|analytic - numeric|_2 / max(|analytic|_2 + |numeric|_2, 1e-12)`.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().fold(0.0, |m, &e| m.max(e))
    }
}

fn norm(t: &Tensor) -> f64 {
    t.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Evaluates `f` at `inputs` as a plain forward pass and returns the scalar.
pub fn eval_scalar<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central differences with the given step.
pub fn check_gradients<F>(inputs: &[Tensor], f: F, step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.gradients(out, &vars, false)?;
    let analytic: Vec<Tensor> = grads.iter().map(|&g| tape.value(g).clone()).collect();

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut num = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = eval_scalar(&work, &f)?;
            work[k].data_mut()[i] = orig - step;
            let minus = eval_scalar(&work, &f)?;
            work[k].data_mut()[i] = orig;
            num.data_mut()[i] = (plus - minus) / (2.0 * step);
        }
        numeric.push(num);
    }
    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let diff = a.zip_map(n, |x, y| x - y).expect("same shapes");
            norm(&diff) / (norm(a) + norm(n)).max(1e-12)
        })
        .collect();
    Ok(GradCheck {
        relative_errors,
        analytic,
        numeric,
    })
}
