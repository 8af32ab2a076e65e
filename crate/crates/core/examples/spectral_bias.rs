//! Per-frequency relative error of SIREN and ReLIFT while fitting a 1-D
//! sum of sinusoids. Low frequencies are learned first; ReLIFT closes the
//! high-frequency gap sooner.

use lift::analysis::track_spectral_bias;
use lift::fit::FitConfig;
use lift::nets::{build_relift, build_siren, InputMap};
use lift::rng::{rng_for, stream};
use lift::signals::synth::{spectral_target, SPECTRAL_PROBES};

fn main() -> lift::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(1000, |s| s.parse().expect("steps"));
    let target = spectral_target(300)?;
    let cfg = FitConfig { steps, lr: 1e-4 };
    for (name, relift) in [("siren", false), ("relift", true)] {
        let mut rng = rng_for(1, stream::INIT);
        let mut net = if relift {
            build_relift(1, 1, 4, 128, 5.0, 2.0, &mut rng)?
        } else {
            build_siren(1, 1, 4, 128, 5.0, &mut rng)?
        };
        net.input_map = InputMap::Identity;
        let (trace, _) = track_spectral_bias(net, &target, &SPECTRAL_PROBES, &cfg, steps / 4)?;
        println!("{name}: relative error at bins {:?}", trace.bins);
        for (step, row) in trace.steps.iter().zip(&trace.errors) {
            let cells: Vec<String> = row.iter().map(|e| format!("{e:9.2e}")).collect();
            println!("  step {step:>5} {}", cells.join(" "));
        }
    }
    Ok(())
}
