use std::fmt::Write as _;

use ndgrad::{Tape, Tensor};

use crate::error::Result;
use crate::nets::Mlp;

/// Value histogram of one sine layer's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub layer: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Histograms of every sine layer's activations over `coords`, with `bins`
/// equal-width bins spanning each layer's observed range.
pub fn activation_histograms(net: &Mlp, coords: &Tensor, bins: usize) -> Result<Vec<Histogram>> {
    let bins = bins.max(1);
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, false);
    let x = tape.constant(coords.clone());
    let (_, hidden) = net.forward_with_hidden(&mut tape, &vars, x)?;
    Ok(hidden
        .iter()
        .enumerate()
        .map(|(layer, &h)| {
            let data = tape.value(h).data();
            let (lo, hi) = data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0u64; bins];
            for &v in data {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
            Histogram { layer, lo, hi, counts }
        })
        .collect())
}

pub fn histograms_csv(hists: &[Histogram]) -> String {
    let mut out = String::from("layer,bin_lo,bin_hi,count\n");
    for h in hists {
        let n = h.counts.len();
        let width = if h.hi > h.lo { (h.hi - h.lo) / n as f64 } else { 1.0 };
        for (k, c) in h.counts.iter().enumerate() {
            let a = h.lo + k as f64 * width;
            writeln!(out, "{},{:.6},{:.6},{c}", h.layer, a, a + width).expect("string write");
        }
    }
    out
}
