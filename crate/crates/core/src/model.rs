//! The full LIFT model: latent generator, modulation map and region bank.

use ndgrad::{Tape, Tensor, Var};
use sha2::{Digest, Sha256};

use crate::error::{LiftError, Result};
use crate::hlg::{HlgParams, HlgVars, LatentHierarchy, LatentShape};
use crate::nets::{coords_tensor, PMLPBank, StackShape, StackVars};
use crate::partition::{grid_partition, GridPartition, PartitionSpec};
use crate::rng::Rng;
use crate::signals::SignalGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct LiftModel {
    pub bank: PMLPBank,
    pub hlg: HlgParams,
    /// Inner-loop step sizes, one per latent tensor (global, mid, local).
    /// The magnitude is used, so they stay positive.
    pub inner_rates: [Tensor; 3],
}

#[derive(Clone, Debug)]
pub struct ModelVars {
    pub bank: StackVars,
    pub hlg: HlgVars,
    pub rates: [Var; 3],
    /// Trainable vars in [`LiftModel::trainable_params_mut`] order.
    pub trainable: Vec<Var>,
}

impl LiftModel {
    pub fn new(
        spec: PartitionSpec,
        stack: StackShape,
        latent: LatentShape,
        hierarchy: bool,
        hlg_bias: bool,
        inner_lr: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if latent.dims != spec.dims() || latent.local_cells != spec.per_dim() {
            return Err(LiftError::Config(format!(
                "local latent grid {}^{} must match the partition {}^{}",
                latent.local_cells,
                latent.dims,
                spec.per_dim(),
                spec.dims()
            )));
        }
        let bank = PMLPBank::new(spec, stack, rng)?;
        let hlg = HlgParams::new(latent, bank.modulation_width(), hierarchy, hlg_bias, rng)?;
        hlg.check_bank(&bank)?;
        Ok(Self {
            bank,
            hlg,
            inner_rates: std::array::from_fn(|_| Tensor::scalar(inner_lr)),
        })
    }

    pub fn latent_shape(&self) -> &LatentShape {
        &self.hlg.shape
    }

    pub fn spec(&self) -> PartitionSpec {
        self.bank.spec
    }

    /// Latent tensors the inner loop adapts: all three with the hierarchy,
    /// only the local grid without.
    pub fn adapted_latents(&self) -> &'static [usize] {
        if self.hlg.hierarchy {
            &[0, 1, 2]
        } else {
            &[2]
        }
    }

    /// Outer-loop parameters: bank, generator, then rates when learned.
    pub fn trainable_params_mut(&mut self, learn_rates: bool) -> Vec<&mut Tensor> {
        let mut out = self.bank.params_mut();
        out.extend(self.hlg.params_mut());
        if learn_rates {
            out.extend(self.inner_rates.iter_mut());
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool, learn_rates: bool) -> ModelVars {
        let bank = self.bank.bind(tape, trainable);
        let hlg = self.hlg.bind(tape, trainable);
        let rates = std::array::from_fn(|i| {
            let t = self.inner_rates[i].clone();
            if trainable && learn_rates {
                tape.leaf(t)
            } else {
                tape.constant(t)
            }
        });
        let mut list = Vec::new();
        if trainable {
            for l in &bank.layers {
                list.push(l.weight);
                list.push(l.bias);
            }
            list.push(bank.output.weight);
            list.push(bank.output.bias);
            list.extend(self.hlg.trainable_vars(&hlg));
            if learn_rates {
                list.extend(rates);
            }
        }
        ModelVars {
            bank,
            hlg,
            rates,
            trainable: list,
        }
    }

    /// Latents to `Z_alpha` to per-region predictions `[R, n, C]`.
    pub fn decode(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        latents: [Var; 3],
        coords: Var,
    ) -> Result<(Var, Var)> {
        let alpha = self.hlg.compose(tape, &vars.hlg, latents)?;
        let mods = self.hlg.modulate(tape, &vars.hlg, alpha)?;
        let shifts = self.bank.split_shifts(tape, mods)?;
        let pred = self.bank.forward(tape, &vars.bank, coords, Some(&shifts))?;
        Ok((alpha, pred))
    }

    /// Untracked reconstruction on a grid of the given spatial shape.
    pub fn reconstruct(&self, latents: &LatentHierarchy, spatial: &[usize]) -> Result<Tensor> {
        let part = grid_partition(spatial, &self.spec())?;
        let per_region = self.predict_regions(latents, &part)?;
        let c = self.bank.shape.out_dim;
        let values = part.assemble(per_region.data(), c)?;
        let mut shape = spatial.to_vec();
        shape.push(c);
        Ok(Tensor::new(&shape, values)?)
    }

    pub fn predict_regions(&self, latents: &LatentHierarchy, part: &GridPartition) -> Result<Tensor> {
        latents.check(self.latent_shape())?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false, false);
        let l = latents.tensors().map(|t| tape.constant(t.clone()));
        let coords = tape.constant(coords_tensor(part)?);
        let (_, pred) = self.decode(&mut tape, &vars, l, coords)?;
        Ok(tape.value(pred).clone())
    }

    pub fn reconstruct_grid(&self, latents: &LatentHierarchy, like: &SignalGrid) -> Result<SignalGrid> {
        let values = self.reconstruct(latents, like.spatial())?;
        Ok(SignalGrid::new(values, "lift reconstruction")?.with_sampling(like.sampling))
    }

    /// Canonical description of the architecture, hashed into fingerprints.
    pub fn describe(&self) -> String {
        let s = &self.bank.shape;
        let l = &self.hlg.shape;
        format!(
            "lift d={} m={} in={} out={} hidden={} width={} w0={} wh={} gamma={} residual={} \
             latent=({},{}x{},{}x{},{},{}) hierarchy={} bias={}",
            self.spec().dims(),
            self.spec().per_dim(),
            s.in_dim,
            s.out_dim,
            s.hidden_layers,
            s.width,
            s.first_omega,
            s.hidden_omega,
            s.gamma,
            s.residual,
            l.global_dim,
            l.mid_cells,
            l.mid_dim,
            l.local_cells,
            l.local_dim,
            l.fused_dim,
            l.alpha_dim,
            self.hlg.hierarchy,
            self.hlg.bias
        )
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.describe())
    }
}

/// Short hex digest of an architecture description.
pub fn fingerprint(description: &str) -> String {
    let digest = Sha256::digest(description.as_bytes());
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    pub(crate) fn tiny(hierarchy: bool) -> LiftModel {
        let spec = PartitionSpec::new(2, 2).unwrap();
        let stack = StackShape {
            in_dim: 2,
            out_dim: 3,
            hidden_layers: 1,
            width: 8,
            first_omega: 10.0,
            hidden_omega: 10.0,
            gamma: 1.0,
            residual: false,
        };
        let latent = LatentShape::new(2, 4, (1, 3), (2, 2));
        LiftModel::new(spec, stack, latent, hierarchy, true, 1.0, &mut rng_for(1, 1)).unwrap()
    }

    #[test]
    fn zero_latents_give_unmodulated_output() {
        let m = tiny(true);
        let lat = LatentHierarchy::zeros(m.latent_shape());
        let part = grid_partition(&[4, 4], &m.spec()).unwrap();
        let a = m.predict_regions(&lat, &part).unwrap();
        let b = m
            .bank
            .forward_values(&crate::nets::ModulationSet::zeros(&m.bank), &part)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_hierarchy_ignores_coarse_latents() {
        let m = tiny(false);
        let mut lat = LatentHierarchy::zeros(m.latent_shape());
        lat.global.data_mut().fill(3.0);
        let a = m.reconstruct(&lat, &[4, 4]).unwrap();
        let b = m.reconstruct(&LatentHierarchy::zeros(m.latent_shape()), &[4, 4]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fingerprint_tracks_architecture() {
        assert_ne!(tiny(true).fingerprint(), tiny(false).fingerprint());
        assert_eq!(tiny(true).fingerprint().len(), 16);
    }
}
