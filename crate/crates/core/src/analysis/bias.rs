use std::fmt::Write as _;

use super::spectrum::{bin_of, dft_bins};
use crate::error::{LiftError, Result};
use crate::fit::{FitConfig, FitData, Fitter};
use crate::nets::Mlp;
use crate::signals::{Sampling, SignalGrid};

/// Relative DFT error per probe frequency at a series of training steps.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTrace {
    /// Angular probe frequencies that were tracked.
    pub probes: Vec<f64>,
    pub bins: Vec<usize>,
    pub steps: Vec<u64>,
    /// `errors[i][j]`: error at `steps[i]` for `probes[j]`.
    pub errors: Vec<Vec<f64>>,
}

impl SpectralTrace {
    pub fn last(&self) -> Option<&[f64]> {
        self.errors.last().map(Vec::as_slice)
    }

    /// Error history of one probe.
    pub fn column(&self, probe: usize) -> Vec<f64> {
        self.errors.iter().map(|row| row[probe]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for b in &self.bins {
            write!(out, ",bin{b}").expect("string write");
        }
        out.push('\n');
        for (s, row) in self.steps.iter().zip(&self.errors) {
            write!(out, "{s}").expect("string write");
            for e in row {
                write!(out, ",{e:.8e}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// DFT bins of angular frequencies on a 1-D grid. Probes must land on a
/// bin of a periodic grid and lie at or below Nyquist.
pub fn probe_bins(target: &SignalGrid, probes: &[f64]) -> Result<Vec<usize>> {
    if target.dims() != 1 {
        return Err(LiftError::Config("spectral probes need a 1-D signal".into()));
    }
    let n = target.points();
    let span = match target.sampling {
        Sampling::Periodic { lo, hi } => hi - lo,
        Sampling::Unit => n as f64 / (n - 1).max(1) as f64,
    };
    probes
        .iter()
        .map(|&w| {
            let b = bin_of(w, span);
            let k = b.round();
            if (b - k).abs() > 1e-6 || k < 0.0 {
                return Err(LiftError::Config(format!("probe {w} falls between DFT bins ({b})")));
            }
            let k = k as usize;
            if 2 * k > n {
                return Err(LiftError::Config(format!("probe {w} is above Nyquist for {n} samples")));
            }
            Ok(k)
        })
        .collect()
}

/// `|P(k) - T(k)| / |T(k)|` per bin, `None` where the target has no energy.
pub fn probe_errors(pred: &[f64], target: &[f64], bins: &[usize]) -> Vec<Option<f64>> {
    let p = dft_bins(pred, bins);
    let t = dft_bins(target, bins);
    let floor = 1e-9 * target.iter().map(|v| v.abs()).sum::<f64>().max(1e-300);
    p.iter()
        .zip(&t)
        .map(|(a, b)| (b.norm() > floor).then(|| (a - b).norm() / b.norm()))
        .collect()
}

/// Trains `net` on a 1-D `target` and records the per-probe relative error
/// before training and every `every` steps, always including the last.
pub fn track_spectral_bias(
    net: Mlp,
    target: &SignalGrid,
    probes: &[f64],
    cfg: &FitConfig,
    every: u64,
) -> Result<(SpectralTrace, Mlp)> {
    if target.channels() != 1 || net.shape.in_dim != 1 || net.shape.out_dim != 1 {
        return Err(LiftError::Config("spectral tracking needs a scalar 1-D signal and network".into()));
    }
    let all_bins = probe_bins(target, probes)?;
    let values = target.values.data();
    let zero = vec![0.0; values.len()];
    let mut keep = Vec::new();
    for (j, e) in probe_errors(&zero, values, &all_bins).iter().enumerate() {
        if e.is_some() {
            keep.push(j);
        } else {
            log::warn!("probe {} has no target energy; excluded", probes[j]);
        }
    }
    let probes: Vec<f64> = keep.iter().map(|&j| probes[j]).collect();
    let bins: Vec<usize> = keep.iter().map(|&j| all_bins[j]).collect();
    let data = FitData::from_grid(target);
    let measure = |net: &Mlp| -> Result<Vec<f64>> {
        let pred = net.predict(&data.coords)?;
        Ok(probe_errors(pred.data(), values, &bins)
            .into_iter()
            .map(|e| e.expect("target energy checked"))
            .collect())
    };
    let mut trace = SpectralTrace {
        probes,
        bins: bins.clone(),
        steps: vec![0],
        errors: vec![measure(&net)?],
    };
    let every = every.max(1);
    let mut fitter = Fitter::new(net, cfg.lr);
    fitter.run(&data, cfg.steps, |f, row| {
        if row.step % every == 0 || row.step == cfg.steps {
            trace.steps.push(row.step);
            trace.errors.push(measure(&f.net)?);
        }
        Ok(())
    })?;
    Ok((trace, fitter.net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{build_siren, InputMap};
    use crate::rng::rng_for;
    use crate::signals::synth::{spectral_target, SPECTRAL_PROBES};

    #[test]
    fn probes_map_to_odd_bins() {
        let t = spectral_target(300).unwrap();
        assert_eq!(probe_bins(&t, &SPECTRAL_PROBES).unwrap(), vec![3, 5, 7, 9]);
        assert!(probe_bins(&t, &[3.3]).is_err());
        assert!(probe_bins(&t, &[1000.0 * std::f64::consts::PI]).is_err());
    }

    #[test]
    fn zero_prediction_has_unit_error() {
        let t = spectral_target(300).unwrap();
        let errs = probe_errors(&vec![0.0; 300], t.values.data(), &[3, 5, 7, 9]);
        assert!(errs.iter().all(|e| (e.unwrap() - 1.0).abs() < 1e-12));
        assert_eq!(probe_errors(&[0.0; 300], t.values.data(), &[2])[0], None);
    }

    #[test]
    fn trace_is_recorded_at_checkpoints() {
        let t = spectral_target(64).unwrap();
        let mut net = build_siren(1, 1, 3, 16, 5.0, &mut rng_for(0, 1)).unwrap();
        net.input_map = InputMap::Identity;
        let cfg = FitConfig { steps: 25, lr: 1e-3 };
        let (trace, _) = track_spectral_bias(net, &t, &SPECTRAL_PROBES, &cfg, 10).unwrap();
        assert_eq!(trace.steps, vec![0, 10, 20, 25]);
        assert!(trace.errors.iter().flatten().all(|e| *e >= 0.0));
        assert_eq!(trace.to_csv().lines().count(), 5);
    }
}
