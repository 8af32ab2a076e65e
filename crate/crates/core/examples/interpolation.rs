//! Blends the latents of two signals and decodes the path between them.

use lift::hlg::LatentShape;
use lift::meta::{build_modulation_dataset, interpolate_latents, outer_train, MetaConfig};
use lift::model::LiftModel;
use lift::nets::StackShape;
use lift::partition::PartitionSpec;
use lift::rng::{rng_for, stream};
use lift::signals::io::save_image;
use lift::signals::synth::blob_image;

fn main() -> lift::Result<()> {
    let stack = StackShape {
        in_dim: 2,
        out_dim: 3,
        hidden_layers: 1,
        width: 32,
        first_omega: 20.0,
        hidden_omega: 20.0,
        gamma: 1.0,
        residual: false,
    };
    let model = LiftModel::new(
        PartitionSpec::new(2, 2)?,
        stack,
        LatentShape::new(2, 16, (1, 8), (2, 8)),
        true,
        true,
        1.0,
        &mut rng_for(2, stream::INIT),
    )?;
    let data: Vec<_> = (0..24).map(|i| blob_image(16, i, 0)).collect::<lift::Result<_>>()?;
    let cfg = MetaConfig { outer_lr: 5e-4, iterations: 150, seed: 2, ..Default::default() };
    let (model, _) = outer_train(model, &data, &cfg)?;

    let named: Vec<_> = data.iter().take(2).enumerate().map(|(i, s)| (format!("blob{i}"), s.clone())).collect();
    let records = build_modulation_dataset(&model, &named, &cfg)?;
    let dir = std::env::temp_dir().join("lift_interpolation");
    std::fs::create_dir_all(&dir)?;
    for k in 0..=6 {
        let t = k as f64 / 6.0;
        let frame = interpolate_latents(&model, &records[0], &records[1], t, &[64, 64])?;
        let (lo, hi) = frame.value_range();
        let path = dir.join(format!("frame{k}.png"));
        save_image(&frame, &path)?;
        println!("t = {t:.3}  range [{lo:.3}, {hi:.3}]  {}", path.display());
    }
    Ok(())
}
