//! Meta-learns a LIFT model on synthetic blob images, then fits latents for
//! unseen blobs in three gradient steps.

use lift::hlg::LatentShape;
use lift::meta::{inner_fit, rec_loss, MetaConfig, MetaTrainer, Task};
use lift::model::LiftModel;
use lift::nets::StackShape;
use lift::partition::PartitionSpec;
use lift::rng::{rng_for, stream};
use lift::signals::synth::blob_image;

fn main() -> lift::Result<()> {
    let iterations: u64 = std::env::args().nth(1).map_or(300, |s| s.parse().expect("iterations"));
    let stack = StackShape {
        in_dim: 2,
        out_dim: 3,
        hidden_layers: 1,
        width: 64,
        first_omega: 20.0,
        hidden_omega: 20.0,
        gamma: 1.0,
        residual: false,
    };
    let model = LiftModel::new(
        PartitionSpec::new(2, 4)?,
        stack,
        LatentShape::new(2, 32, (2, 16), (4, 8)),
        true,
        true,
        1.0,
        &mut rng_for(1, stream::INIT),
    )?;
    let cfg = MetaConfig { outer_lr: 5e-4, iterations, seed: 1, ..Default::default() };
    let tasks = (0..64)
        .map(|i| Task::new(&model, i.to_string(), &blob_image(16, i, 0)?))
        .collect::<lift::Result<Vec<_>>>()?;

    let mut trainer = MetaTrainer::new(model, cfg.clone())?;
    trainer.train(&tasks, |_, row| {
        if row.iter % 50 == 0 {
            println!("iter {:>5}  L_Rec {:.4e}  L_Smooth {:.4e}", row.iter, row.rec, row.smooth);
        }
        Ok(())
    })?;

    let mut total = 0.0;
    for i in 1000..1016 {
        let img = blob_image(16, i, 0)?;
        let latents = inner_fit(&trainer.model, &img, &cfg)?;
        let rec = trainer.model.reconstruct(&latents, &[16, 16])?;
        total += -10.0 * rec_loss(&rec, &img.values)?.log10();
    }
    println!("held-out psnr {:.2} dB", total / 16.0);
    Ok(())
}
