//! Fits a ReLIFT network to the built-in test image and writes the result.
//!
//! cargo run --release --example fit_image -- [steps] [out.png]

use lift::analysis::{psnr, ssim};
use lift::fit::{FitData, Fitter};
use lift::nets::build_relift;
use lift::rng::{rng_for, stream};
use lift::signals::io::save_image;
use lift::signals::synth::test_image;
use lift::signals::{Field, SignalGrid};

fn main() -> lift::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: u64 = args.next().map_or(300, |s| s.parse().expect("steps"));
    let out = args.next().unwrap_or_else(|| "fit_image.png".into());

    let img = test_image(64)?;
    let net = build_relift(2, 3, 4, 128, 30.0, 2.0, &mut rng_for(0, stream::INIT))?;
    let mut fitter = Fitter::new(net, 1e-4);
    let data = FitData::from_grid(&img);
    fitter.run(&data, steps, |f, row| {
        if row.step % 50 == 0 {
            let p = psnr(&f.net.sample(&[64, 64])?, &img.values, 1.0)?;
            println!("step {:>4}  loss {:.3e}  psnr {p:.2} dB", row.step, row.loss);
        }
        Ok(())
    })?;

    let rec = fitter.net.sample(&[64, 64])?;
    println!(
        "final psnr {:.2} dB, ssim {:.4}",
        psnr(&rec, &img.values, 1.0)?,
        ssim(&rec, &img.values, 1.0)?
    );
    save_image(&SignalGrid::new(rec, "fit")?, out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
