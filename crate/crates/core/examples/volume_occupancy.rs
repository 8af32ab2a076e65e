//! Fits a SIREN to a binary occupancy volume and reports IoU at 0.5.

use lift::analysis::iou;
use lift::fit::{fit, FitConfig, FitData};
use lift::nets::build_siren;
use lift::rng::{rng_for, stream};
use lift::signals::synth::shapes_volume;
use lift::signals::Field;

fn main() -> lift::Result<()> {
    let vol = shapes_volume(24, 4)?;
    let occupied = vol.values.data().iter().filter(|&&v| v > 0.5).count();
    println!("{} of {} voxels occupied", occupied, vol.points());
    let net = build_siren(3, 1, 3, 128, 15.0, &mut rng_for(4, stream::INIT))?;
    let (net, log) = fit(net, &FitData::from_grid(&vol), &FitConfig { steps: 200, lr: 1e-4 })?;
    let pred = net.sample(&[24, 24, 24])?;
    println!(
        "loss {:.3e} -> {:.3e}, iou {:.4}",
        log[0].loss,
        log[log.len() - 1].loss,
        iou(&pred, &vol.values, 0.5)?
    );
    Ok(())
}
