use ndgrad::Tensor;

use super::grid::{Sampling, SignalGrid};
use crate::error::{LiftError, Result};
use crate::hlg::LatentHierarchy;
use crate::model::LiftModel;
use crate::nets::Mlp;

/// A fitted continuous signal that can be sampled on any uniform grid.
pub trait Field {
    fn dims(&self) -> usize;
    fn channels(&self) -> usize;
    /// Values `[N_1, .., N_D, C]` on the grid of the given spatial shape.
    fn sample(&self, spatial: &[usize]) -> Result<Tensor>;
}

impl Field for Mlp {
    fn dims(&self) -> usize {
        self.shape.in_dim
    }

    fn channels(&self) -> usize {
        self.shape.out_dim
    }

    fn sample(&self, spatial: &[usize]) -> Result<Tensor> {
        let mut shape = spatial.to_vec();
        shape.push(1);
        let grid = SignalGrid::new(Tensor::zeros(&shape), "query")?;
        let out = self.predict(&grid.coords())?;
        *shape.last_mut().expect("nonempty") = self.shape.out_dim;
        Ok(out.reshape(&shape)?)
    }
}

/// A meta-learned model paired with one signal's latents.
#[derive(Clone, Copy, Debug)]
pub struct LiftField<'a> {
    pub model: &'a LiftModel,
    pub latents: &'a LatentHierarchy,
}

impl Field for LiftField<'_> {
    fn dims(&self) -> usize {
        self.model.spec().dims()
    }

    fn channels(&self) -> usize {
        self.model.bank.shape.out_dim
    }

    fn sample(&self, spatial: &[usize]) -> Result<Tensor> {
        self.model.reconstruct(self.latents, spatial)
    }
}

/// Samples a fit on a uniform grid of `shape`, usually denser than the
/// training grid. Coordinates follow the training convention, so the
/// training shape reproduces the training reconstruction.
pub fn dense_query(field: &dyn Field, shape: &[usize]) -> Result<SignalGrid> {
    if shape.len() != field.dims() || shape.iter().any(|&n| n == 0) {
        return Err(LiftError::Config(format!(
            "query shape {shape:?} does not match a {}-D field",
            field.dims()
        )));
    }
    let values = field.sample(shape)?;
    Ok(SignalGrid::new(values, format!("query {shape:?}"))?.with_sampling(Sampling::Unit))
}
