//! Fits a 2x box-downsampled image, then queries the network on the full grid.

use lift::analysis::psnr;
use lift::fit::{fit, FitConfig, FitData};
use lift::nets::build_relift;
use lift::rng::{rng_for, stream};
use lift::signals::synth::test_image;
use lift::signals::{dense_query, downsample};

fn main() -> lift::Result<()> {
    let img = test_image(64)?;
    let low = downsample(&img, 2)?;
    let net = build_relift(2, 3, 4, 128, 20.0, 2.0, &mut rng_for(3, stream::INIT))?;
    let (net, _) = fit(net, &FitData::from_grid(&low), &FitConfig { steps: 300, lr: 1e-4 })?;
    for n in [32, 64, 128] {
        let grid = dense_query(&net, &[n, n])?;
        let (lo, hi) = grid.value_range();
        println!("{n}x{n}: range [{lo:.3}, {hi:.3}]");
    }
    let up = dense_query(&net, &[64, 64])?;
    println!("64x64 against the original: {:.2} dB", psnr(&up.values, &img.values, 1.0)?);
    Ok(())
}
