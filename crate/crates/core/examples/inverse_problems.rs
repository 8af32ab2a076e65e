//! Inpainting and photon-noise denoising with a ReLIFT prior.

use lift::analysis::{masked_psnr, psnr};
use lift::fit::{fit, FitConfig, FitData};
use lift::nets::build_relift;
use lift::rng::{rng_for, stream};
use lift::signals::synth::test_image;
use lift::signals::{degrade, Degradation, Field};

fn main() -> lift::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(300, |s| s.parse().expect("steps"));
    let img = test_image(64)?;
    let cfg = FitConfig { steps, lr: 1e-4 };

    let d = degrade(&img, &Degradation::InpaintMask { fraction: 0.25, seed: 1 })?;
    let observed = d.observed.clone().expect("inpainting keeps a mask");
    let net = build_relift(2, 3, 4, 128, 30.0, 2.0, &mut rng_for(1, stream::INIT))?;
    let (net, _) = fit(net, &FitData::observed(&d.train, &observed)?, &cfg)?;
    let rec = net.sample(&[64, 64])?;
    println!("inpainting: withheld pixels {:.2} dB", masked_psnr(&rec, &img.values, &d.withheld(), 1.0)?);

    let d = degrade(&img, &Degradation::PhotonNoise { tau: 40.0, readout: 2.0, seed: 1 })?;
    let net = build_relift(2, 3, 4, 128, 10.0, 2.0, &mut rng_for(1, stream::INIT))?;
    let (net, _) = fit(net, &FitData::from_grid(&d.train), &cfg)?;
    println!(
        "denoising: noisy {:.2} dB -> fitted {:.2} dB",
        psnr(&d.train.values, &img.values, 1.0)?,
        psnr(&net.sample(&[64, 64])?, &img.values, 1.0)?
    );
    Ok(())
}
