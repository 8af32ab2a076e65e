use ndgrad::{Tape, Tensor, Var};

use super::layer::{SineStack, StackShape, StackVars};
use crate::error::{LiftError, Result};
use crate::partition::{GridPartition, PartitionSpec};
use crate::rng::Rng;

/// One small sine network per region, stored as stacked tensors so that all
/// regions run as a single batched matmul per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PMLPBank {
    pub spec: PartitionSpec,
    pub shape: StackShape,
    pub stack: SineStack,
}

/// Per-region shifts added inside every sine layer: `[R, L - 1, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationSet {
    pub shifts: Tensor,
}

impl ModulationSet {
    pub fn zeros(bank: &PMLPBank) -> Self {
        Self {
            shifts: Tensor::zeros(&bank.modulation_shape()),
        }
    }

    pub fn new(bank: &PMLPBank, shifts: Tensor) -> Result<Self> {
        if shifts.shape() != bank.modulation_shape() {
            return Err(LiftError::Config(format!(
                "modulations {:?} do not fit bank {:?}",
                shifts.shape(),
                bank.modulation_shape()
            )));
        }
        Ok(Self { shifts })
    }
}

impl PMLPBank {
    pub fn new(spec: PartitionSpec, shape: StackShape, rng: &mut Rng) -> Result<Self> {
        if shape.in_dim != spec.dims() {
            return Err(LiftError::Config(format!(
                "bank input dimension {} does not match partition dimensionality {}",
                shape.in_dim,
                spec.dims()
            )));
        }
        Ok(Self {
            stack: SineStack::init(&shape, Some(spec.region_count()), rng)?,
            spec,
            shape,
        })
    }

    pub fn regions(&self) -> usize {
        self.spec.region_count()
    }

    pub fn modulation_shape(&self) -> [usize; 3] {
        [self.regions(), self.shape.hidden_layers, self.shape.width]
    }

    /// Shift slots per region, `(L - 1) * W`.
    pub fn modulation_width(&self) -> usize {
        self.shape.hidden_layers * self.shape.width
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.stack.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stack.params_mut()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> StackVars {
        self.stack.bind(tape, trainable)
    }

    /// Splits flat per-region modulations `[R, (L - 1) * W]` (or `[R, L - 1, W]`)
    /// into one `[R, 1, W]` shift per layer.
    pub fn split_shifts(&self, tape: &mut Tape, mods: Var) -> Result<Vec<Var>> {
        let (r, w) = (self.regions(), self.shape.width);
        let flat = tape.reshape(mods, &[r, self.modulation_width()])?;
        (0..self.shape.hidden_layers)
            .map(|l| {
                let s = tape.slice_last(flat, l * w, w)?;
                Ok(tape.reshape(s, &[r, 1, w])?)
            })
            .collect()
    }

    /// `coords` is `[R, n, D]` in region-local units; returns `[R, n, C]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &StackVars,
        coords: Var,
        shifts: Option<&[Var]>,
    ) -> Result<Var> {
        let s = tape.shape(coords);
        if s.len() != 3 || s[0] != self.regions() || s[2] != self.shape.in_dim {
            return Err(LiftError::Shape(format!(
                "bank expects [{}, n, {}] coordinates, got {:?}",
                self.regions(),
                self.shape.in_dim,
                s
            )));
        }
        self.stack.forward(tape, vars, coords, shifts)
    }

    /// Untracked evaluation over a partitioned grid.
    pub fn forward_values(&self, mods: &ModulationSet, part: &GridPartition) -> Result<Tensor> {
        if part.spec != self.spec {
            return Err(LiftError::Config("grid partition built for a different spec".into()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let coords = tape.constant(coords_tensor(part)?);
        let m = tape.constant(mods.shifts.clone());
        let shifts = self.split_shifts(&mut tape, m)?;
        let y = self.forward(&mut tape, &vars, coords, Some(&shifts))?;
        Ok(tape.value(y).clone())
    }
}

/// Region-local coordinates of a partitioned grid as `[R, n, D]`.
pub fn coords_tensor(part: &GridPartition) -> Result<Tensor> {
    Ok(Tensor::new(
        &[part.region_count(), part.points_per_region, part.spec.dims()],
        part.local_coords.clone(),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::mlp::{InputMap, Mlp};
    use crate::partition::grid_partition;
    use crate::rng::rng_for;

    fn shape(d: usize) -> StackShape {
        StackShape {
            in_dim: d,
            out_dim: 2,
            hidden_layers: 2,
            width: 4,
            first_omega: 10.0,
            hidden_omega: 10.0,
            gamma: 1.0,
            residual: false,
        }
    }

    #[test]
    fn batched_equals_per_region_loop() {
        let spec = PartitionSpec::new(1, 2).unwrap();
        let bank = PMLPBank::new(spec, shape(1), &mut rng_for(1, 1)).unwrap();
        let part = grid_partition(&[8], &spec).unwrap();
        let mods = ModulationSet::new(
            &bank,
            Tensor::from_fn(&bank.modulation_shape(), |i| (i as f64 * 0.3).sin()),
        )
        .unwrap();
        let batched = bank.forward_values(&mods, &part).unwrap();
        for r in 0..2 {
            // a one-region bank holding only region r's slice
            let mut single = PMLPBank::new(PartitionSpec::new(1, 1).unwrap(), shape(1), &mut rng_for(9, 1)).unwrap();
            for (dst, src) in single.params_mut().into_iter().zip(bank.params()) {
                let n = dst.len();
                dst.data_mut().copy_from_slice(&src.data()[r * n..(r + 1) * n]);
            }
            let k = mods.shifts.len() / 2;
            let m1 = ModulationSet::new(
                &single,
                Tensor::new(&single.modulation_shape(), mods.shifts.data()[r * k..(r + 1) * k].to_vec()).unwrap(),
            )
            .unwrap();
            let mut tape = Tape::new();
            let vars = single.bind(&mut tape, false);
            let c = tape.constant(Tensor::new(&[1, 4, 1], part.local_coords[r * 4..(r + 1) * 4].to_vec()).unwrap());
            let mv = tape.constant(m1.shifts.clone());
            let sh = single.split_shifts(&mut tape, mv).unwrap();
            let y = single.forward(&mut tape, &vars, c, Some(&sh)).unwrap();
            assert_eq!(tape.value(y).data(), &batched.data()[r * 8..(r + 1) * 8]);
        }
    }

    #[test]
    fn single_region_equals_plain_mlp() {
        let spec = PartitionSpec::new(2, 1).unwrap();
        let bank = PMLPBank::new(spec, shape(2), &mut rng_for(2, 1)).unwrap();
        let mut mlp = Mlp::new(shape(2), InputMap::Identity, &mut rng_for(4, 1)).unwrap();
        for (dst, src) in mlp.params_mut().into_iter().zip(bank.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        let part = grid_partition(&[3, 5], &spec).unwrap();
        let y = bank.forward_values(&ModulationSet::zeros(&bank), &part).unwrap();
        let coords = Tensor::new(&[15, 2], part.local_coords.clone()).unwrap();
        let z = mlp.predict(&coords).unwrap();
        assert_eq!(y.data(), z.data());
    }

    #[test]
    fn mismatched_modulations_rejected() {
        let spec = PartitionSpec::new(1, 2).unwrap();
        let bank = PMLPBank::new(spec, shape(1), &mut rng_for(1, 1)).unwrap();
        assert!(matches!(
            ModulationSet::new(&bank, Tensor::zeros(&[2, 1, 4])),
            Err(LiftError::Config(_))
        ));
    }
}
