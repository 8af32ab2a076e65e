//! Convergence of matched SIREN and ReLIFT networks on one image.

use lift::analysis::psnr;
use lift::fit::{FitData, Fitter};
use lift::nets::{build_relift, build_siren};
use lift::rng::{rng_for, stream};
use lift::signals::synth::test_image;
use lift::signals::Field;

fn main() -> lift::Result<()> {
    let steps: u64 = std::env::args().nth(1).map_or(300, |s| s.parse().expect("steps"));
    let img = test_image(64)?;
    let data = FitData::from_grid(&img);
    let mut curves = Vec::new();
    for relift in [false, true] {
        let mut rng = rng_for(1, stream::INIT);
        let net = if relift {
            build_relift(2, 3, 4, 128, 30.0, 2.0, &mut rng)?
        } else {
            build_siren(2, 3, 4, 128, 30.0, &mut rng)?
        };
        let mut fitter = Fitter::new(net, 1e-4);
        let mut curve = Vec::new();
        fitter.run(&data, steps, |f, row| {
            if row.step % 50 == 0 {
                curve.push((row.step, psnr(&f.net.sample(&[64, 64])?, &img.values, 1.0)?));
            }
            Ok(())
        })?;
        curves.push(curve);
    }
    println!("{:>6} {:>10} {:>10}", "step", "siren", "relift");
    for (s, r) in curves[0].iter().zip(&curves[1]) {
        println!("{:>6} {:>10.2} {:>10.2}", s.0, s.1, r.1);
    }
    Ok(())
}
