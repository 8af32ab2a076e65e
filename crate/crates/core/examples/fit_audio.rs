//! Fits a ReLIFT network to a synthetic chirp and writes it as WAV.

use lift::analysis::psnr;
use lift::fit::{fit, FitConfig, FitData};
use lift::nets::build_relift;
use lift::rng::{rng_for, stream};
use lift::signals::io::save_audio;
use lift::signals::synth::chirp;
use lift::signals::{Field, SignalGrid};

fn main() -> lift::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "chirp_fit.wav".into());
    let signal = chirp(4096)?;
    let net = build_relift(1, 1, 4, 128, 300.0, 2.0, &mut rng_for(5, stream::INIT))?;
    let (net, _) = fit(net, &FitData::from_grid(&signal), &FitConfig { steps: 300, lr: 1e-4 })?;
    let rec = net.sample(&[4096])?;
    println!("psnr {:.2} dB (peak 2)", psnr(&rec, &signal.values, 2.0)?);
    save_audio(&SignalGrid::new(rec, "fit")?, out.as_ref(), 16_000)?;
    println!("wrote {out}");
    Ok(())
}
