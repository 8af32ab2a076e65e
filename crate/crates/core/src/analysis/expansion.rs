//! Harmonic expansion of a two-sine-layer network with scalar input and
//! output: `w2 . sin(W1 sin(gamma Omega r)) (+ sin(gamma Omega r))`.

use ndgrad::Tensor;

use super::bessel::{bessel_j, tail_term_bound};
use crate::error::{LiftError, Result};
use crate::nets::{Dense, InputMap, Mlp, SineLayer, SineStack, StackShape};

/// The network output as `offset + sum_k coefficients[k] sin(frequencies[k] r)`
/// with distinct positive frequencies in increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicExpansion {
    pub frequencies: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub s_max: usize,
    /// Upper bound on `|network - expansion|` anywhere.
    pub tail_bound: f64,
    pub input_map: InputMap,
}

impl HarmonicExpansion {
    /// Evaluates at the network's internal coordinate `r`.
    pub fn evaluate(&self, r: f64) -> f64 {
        self.offset
            + self
                .frequencies
                .iter()
                .zip(&self.coefficients)
                .map(|(f, c)| c * (f * r).sin())
                .sum::<f64>()
    }

    /// Coefficient at `frequency`, zero if absent.
    pub fn coefficient_at(&self, frequency: f64) -> f64 {
        let f = frequency.abs();
        let sign = if frequency < 0.0 { -1.0 } else { 1.0 };
        self.frequencies
            .iter()
            .position(|&g| close(g, f))
            .map_or(0.0, |i| sign * self.coefficients[i])
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Builds the analysed architecture directly from its parameters: first
/// layer frequencies `omegas` (`T`), hidden weights `w1` (`F x T`, row per
/// hidden unit) and readout `w2` (`F`). All biases are zero. A residual
/// needs `F == T`.
pub fn harmonic_net(omegas: &[f64], w1: &[Vec<f64>], w2: &[f64], gamma: f64, residual: bool) -> Result<Mlp> {
    let (t, f) = (omegas.len(), w1.len());
    if t == 0 || f == 0 || w2.len() != f || w1.iter().any(|row| row.len() != t) {
        return Err(LiftError::Shape(format!(
            "need T frequencies, F x T hidden weights and F readout weights (T={t}, F={f})"
        )));
    }
    let mut first = Dense::zeros(None, 1, t);
    first.weight.data_mut().copy_from_slice(omegas);
    let mut hidden = Dense::zeros(None, t, f);
    for (m, row) in w1.iter().enumerate() {
        for (k, &w) in row.iter().enumerate() {
            hidden.weight.data_mut()[k * f + m] = w;
        }
    }
    let mut output = Dense::zeros(None, f, 1);
    output.weight.data_mut().copy_from_slice(w2);
    Ok(Mlp {
        shape: StackShape {
            in_dim: 1,
            out_dim: 1,
            hidden_layers: 2,
            width: f,
            first_omega: 1.0,
            hidden_omega: 1.0,
            gamma,
            residual,
        },
        input_map: InputMap::Identity,
        stack: SineStack {
            layers: vec![
                SineLayer::new(first, 1.0, gamma, false)?,
                SineLayer::new(hidden, 1.0, 1.0, residual)?,
            ],
            output,
        },
    })
}

/// Expands `net` over integer orders `|s_t| <= s_max`. Each hidden unit `m`
/// contributes `w2_m prod_t J_{s_t}(W1_{m,t})` at frequency
/// `gamma sum_t s_t Omega_t`; with a residual, `w2_m` also sits at the unit's
/// own fundamental `gamma Omega_m`.
pub fn bessel_expand(net: &Mlp, s_max: usize) -> Result<HarmonicExpansion> {
    let layers = &net.stack.layers;
    let unsupported = |why: &str| Err(LiftError::Unsupported(format!("harmonic expansion: {why}")));
    if net.shape.in_dim != 1 || net.shape.out_dim != 1 || layers.len() != 2 {
        return unsupported("need scalar input and output and exactly two sine layers");
    }
    if net.stack.output.weight.rank() != 2 {
        return unsupported("region banks are not supported");
    }
    let (first, hidden) = (&layers[0], &layers[1]);
    if first.dense.bias.max_abs() != 0.0 || hidden.dense.bias.max_abs() != 0.0 {
        return unsupported("sine layer biases must be zero");
    }
    let t = first.dense.fan_out();
    let f = hidden.dense.fan_out();
    let enumerated = (2 * s_max + 1) as f64;
    if enumerated.powi(t as i32) * f as f64 > 5e7 {
        return unsupported("too many orders to enumerate");
    }
    let gamma = first.gamma;
    let omegas: Vec<f64> = first.dense.weight.data().iter().map(|w| first.omega0 * w).collect();
    let hw = hidden.dense.weight.data();
    let w1 = |m: usize, k: usize| hidden.effective_omega() * hw[k * f + m];
    let w2 = net.stack.output.weight.data();

    let mut terms: Vec<(f64, f64)> = Vec::new();
    let mut push = |freq: f64, coef: f64| {
        if freq != 0.0 && coef != 0.0 {
            // sin(-x) = -sin(x)
            if freq < 0.0 {
                terms.push((-freq, -coef));
            } else {
                terms.push((freq, coef));
            }
        }
    };
    let orders: Vec<i32> = (-(s_max as i32)..=s_max as i32).collect();
    let combos = orders.len().pow(t as u32);
    let mut tail_bound = 0.0;
    for m in 0..f {
        // table[k][j] = J_{orders[j]}(W1_{m,k})
        let table: Vec<Vec<f64>> = (0..t)
            .map(|k| orders.iter().map(|&s| bessel_j(s, w1(m, k))).collect())
            .collect();
        for combo in 0..combos {
            let (mut rest, mut coef, mut freq) = (combo, w2[m], 0.0);
            for k in 0..t {
                let j = rest % orders.len();
                rest /= orders.len();
                coef *= table[k][j];
                freq += orders[j] as f64 * omegas[k];
            }
            push(gamma * freq, coef);
        }
        if hidden.residual {
            push(gamma * omegas[m], w2[m]);
        }
        // Sum over all orders of prod_k |J| minus the enumerated part.
        let (mut kept, mut full) = (1.0, 1.0);
        for (k, row) in table.iter().enumerate() {
            let k_sum: f64 = row.iter().map(|v| v.abs()).sum();
            kept *= k_sum;
            full *= k_sum + 2.0 * order_tail(s_max, w1(m, k));
        }
        tail_bound += w2[m].abs() * (full - kept).max(0.0);
    }

    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut frequencies: Vec<f64> = Vec::new();
    let mut coefficients: Vec<f64> = Vec::new();
    for (fq, c) in terms {
        match frequencies.last() {
            Some(&last) if close(last, fq) => *coefficients.last_mut().expect("paired") += c,
            _ => {
                frequencies.push(fq);
                coefficients.push(c);
            }
        }
    }
    Ok(HarmonicExpansion {
        frequencies,
        coefficients,
        offset: net.stack.output.bias.data()[0],
        s_max,
        tail_bound,
        input_map: net.input_map,
    })
}

/// Bound on `sum_{n > s_max} |J_n(beta)|` from `(|beta|/2)^n / n!`.
fn order_tail(s_max: usize, beta: f64) -> f64 {
    let half = 0.5 * beta.abs();
    let first = tail_term_bound(s_max + 1, beta);
    // Ratio of consecutive bounds is half / n <= half / (s_max + 2).
    let ratio = half / (s_max + 2) as f64;
    if ratio < 1.0 {
        first / (1.0 - ratio)
    } else {
        f64::INFINITY
    }
}

/// Largest `|net(x) - expansion(x)|` over the given input coordinates.
pub fn expansion_vs_direct(net: &Mlp, expansion: &HarmonicExpansion, coords: &[f64]) -> Result<f64> {
    let input = Tensor::new(&[coords.len(), 1], coords.to_vec())?;
    let direct = net.predict(&input)?;
    let mut worst = 0.0f64;
    for (&x, &y) in coords.iter().zip(direct.data()) {
        let r = match expansion.input_map {
            InputMap::Identity => x,
            InputMap::Centered => 2.0 * x - 1.0,
        };
        worst = worst.max((expansion.evaluate(r) - y).abs());
    }
    Ok(worst)
}
