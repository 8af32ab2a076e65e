//! Hierarchical latent generator.
//!
//! Three latent grids per signal (global `1^D x d_g`, intermediate
//! `P_i^D x d_i`, local `P^D x d_l`) are fused coarse to fine:
//!
//! ```text
//! Z'     = Linear1(Concat(Upsample(Z_global -> P_i), Z_mid))
//! Z_alpha = Linear2(Concat(Upsample(Z' -> P), Z_local))
//! shifts = ModMap(Z_alpha)          one shared linear map per cell
//! ```
//!
//! There is no nonlinearity anywhere, so the whole map is affine in the
//! latents. With the hierarchy disabled, `Z_alpha = LocalMap(Z_local)`.

use ndgrad::{Tape, Tensor, Var};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{LiftError, Result};
use crate::nets::{affine, Dense, DenseVars, ModulationSet, PMLPBank};
use crate::rng::Rng;

/// Sizes of the latent hierarchy. Spatial grids are cubes of side
/// `mid_cells` and `local_cells` in `dims` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub dims: usize,
    pub global_dim: usize,
    pub mid_cells: usize,
    pub mid_dim: usize,
    pub local_cells: usize,
    pub local_dim: usize,
    /// Channel width of the fused intermediate grid `Z'`.
    pub fused_dim: usize,
    /// Channel width of `Z_alpha`.
    pub alpha_dim: usize,
}

impl LatentShape {
    /// Fused and alpha widths default to the intermediate and local widths.
    pub fn new(
        dims: usize,
        global_dim: usize,
        (mid_cells, mid_dim): (usize, usize),
        (local_cells, local_dim): (usize, usize),
    ) -> Self {
        Self {
            dims,
            global_dim,
            mid_cells,
            mid_dim,
            local_cells,
            local_dim,
            fused_dim: mid_dim,
            alpha_dim: local_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = (1..=3).contains(&self.dims);
        let sizes_ok = [
            self.global_dim,
            self.mid_cells,
            self.mid_dim,
            self.local_cells,
            self.local_dim,
            self.fused_dim,
            self.alpha_dim,
        ]
        .iter()
        .all(|&v| v > 0);
        if !dims_ok || !sizes_ok {
            return Err(LiftError::Config(format!("invalid latent shape {self:?}")));
        }
        if self.local_cells % self.mid_cells != 0 {
            return Err(LiftError::Config(format!(
                "intermediate grid {} must divide local grid {}",
                self.mid_cells, self.local_cells
            )));
        }
        Ok(())
    }

    fn grid(&self, cells: usize, channels: usize) -> Vec<usize> {
        let mut s = vec![cells; self.dims];
        s.push(channels);
        s
    }

    pub fn global_shape(&self) -> Vec<usize> {
        self.grid(1, self.global_dim)
    }

    pub fn mid_shape(&self) -> Vec<usize> {
        self.grid(self.mid_cells, self.mid_dim)
    }

    pub fn local_shape(&self) -> Vec<usize> {
        self.grid(self.local_cells, self.local_dim)
    }

    pub fn alpha_shape(&self) -> Vec<usize> {
        self.grid(self.local_cells, self.alpha_dim)
    }

    pub fn local_spatial(&self) -> Vec<usize> {
        vec![self.local_cells; self.dims]
    }
}

/// The three per-signal latents, in the order global, intermediate, local.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentHierarchy {
    pub global: Tensor,
    pub mid: Tensor,
    pub local: Tensor,
}

impl LatentHierarchy {
    pub fn zeros(shape: &LatentShape) -> Self {
        Self {
            global: Tensor::zeros(&shape.global_shape()),
            mid: Tensor::zeros(&shape.mid_shape()),
            local: Tensor::zeros(&shape.local_shape()),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 3] {
        [&self.global, &self.mid, &self.local]
    }

    pub fn from_tensors([global, mid, local]: [Tensor; 3]) -> Self {
        Self { global, mid, local }
    }

    pub fn check(&self, shape: &LatentShape) -> Result<()> {
        let want = [shape.global_shape(), shape.mid_shape(), shape.local_shape()];
        for (t, w) in self.tensors().iter().zip(&want) {
            if t.shape() != w.as_slice() {
                return Err(LiftError::Config(format!(
                    "latent {:?} does not match expected {:?}",
                    t.shape(),
                    w
                )));
            }
        }
        Ok(())
    }

    /// `(1 - t) a + t b`, with exact endpoints.
    pub fn lerp(a: &Self, b: &Self, t: f64) -> Result<Self> {
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        let mix = |x: &Tensor, y: &Tensor| x.zip_map(y, |p, q| (1.0 - t) * p + t * q);
        Ok(Self {
            global: mix(&a.global, &b.global)?,
            mid: mix(&a.mid, &b.mid)?,
            local: mix(&a.local, &b.local)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HlgParams {
    pub shape: LatentShape,
    /// When false the generator is bypassed and only `local_map` is used.
    pub hierarchy: bool,
    /// Whether the linear maps carry trainable biases.
    pub bias: bool,
    pub linear1: Dense,
    pub linear2: Dense,
    pub local_map: Dense,
    pub modmap: Dense,
}

#[derive(Clone, Debug)]
pub struct HlgVars {
    pub linear1: DenseVars,
    pub linear2: DenseVars,
    pub local_map: DenseVars,
    pub modmap: DenseVars,
}

fn linear(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Dense {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut d = Dense::zeros(None, fan_in, fan_out);
    for v in d.weight.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
    d
}

impl HlgParams {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero, so zero latents
    /// produce zero modulations at initialization.
    pub fn new(
        shape: LatentShape,
        modulation_width: usize,
        hierarchy: bool,
        bias: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            linear1: linear(shape.global_dim + shape.mid_dim, shape.fused_dim, rng),
            linear2: linear(shape.fused_dim + shape.local_dim, shape.alpha_dim, rng),
            local_map: linear(shape.local_dim, shape.alpha_dim, rng),
            modmap: linear(shape.alpha_dim, modulation_width, rng),
            shape,
            hierarchy,
            bias,
        })
    }

    pub fn modulation_width(&self) -> usize {
        self.modmap.fan_out()
    }

    fn active(&self) -> Vec<&Dense> {
        if self.hierarchy {
            vec![&self.linear1, &self.linear2, &self.modmap]
        } else {
            vec![&self.local_map, &self.modmap]
        }
    }

    /// Trainable tensors in a fixed order. Only maps on the active path are
    /// listed; biases only when enabled.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for d in self.active() {
            out.push(&d.weight);
            if self.bias {
                out.push(&d.bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let bias = self.bias;
        let maps: Vec<&mut Dense> = if self.hierarchy {
            vec![&mut self.linear1, &mut self.linear2, &mut self.modmap]
        } else {
            vec![&mut self.local_map, &mut self.modmap]
        };
        let mut out = Vec::new();
        for d in maps {
            out.push(&mut d.weight);
            if bias {
                out.push(&mut d.bias);
            }
        }
        out
    }

    /// Every tensor, active or not, for serialization.
    pub fn all_tensors(&self) -> Vec<&Tensor> {
        [&self.linear1, &self.linear2, &self.local_map, &self.modmap]
            .into_iter()
            .flat_map(|d| [&d.weight, &d.bias])
            .collect()
    }

    pub fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [
            &mut self.linear1,
            &mut self.linear2,
            &mut self.local_map,
            &mut self.modmap,
        ]
        .into_iter()
        .flat_map(|d| [&mut d.weight, &mut d.bias])
        .collect()
    }

    /// Binds all maps. Only parameters listed by [`HlgParams::params`] are
    /// trainable when `trainable` is set.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> HlgVars {
        let bind = |tape: &mut Tape, d: &Dense, on_path: bool| {
            let put = |tape: &mut Tape, t: &Tensor, train: bool| {
                if train {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            };
            let train = trainable && on_path;
            DenseVars {
                weight: put(tape, &d.weight, train),
                bias: put(tape, &d.bias, train && self.bias),
            }
        };
        HlgVars {
            linear1: bind(tape, &self.linear1, self.hierarchy),
            linear2: bind(tape, &self.linear2, self.hierarchy),
            local_map: bind(tape, &self.local_map, !self.hierarchy),
            modmap: bind(tape, &self.modmap, true),
        }
    }

    /// Trainable vars in [`HlgParams::params`] order.
    pub fn trainable_vars(&self, vars: &HlgVars) -> Vec<Var> {
        let maps = if self.hierarchy {
            vec![vars.linear1, vars.linear2, vars.modmap]
        } else {
            vec![vars.local_map, vars.modmap]
        };
        let mut out = Vec::new();
        for d in maps {
            out.push(d.weight);
            if self.bias {
                out.push(d.bias);
            }
        }
        out
    }

    /// The compositional latent `Z_alpha`, `[P.., d_alpha]`.
    pub fn compose(&self, tape: &mut Tape, vars: &HlgVars, latents: [Var; 3]) -> Result<Var> {
        let s = &self.shape;
        let [global, mid, local] = latents;
        if tape.shape(local) != s.local_shape().as_slice() {
            return Err(LiftError::Config(format!(
                "local latent {:?} does not match {:?}",
                tape.shape(local),
                s.local_shape()
            )));
        }
        if !self.hierarchy {
            return affine(tape, local, vars.local_map);
        }
        if tape.shape(global) != s.global_shape().as_slice()
            || tape.shape(mid) != s.mid_shape().as_slice()
        {
            return Err(LiftError::Config(format!(
                "latents {:?}/{:?} do not match {:?}/{:?}",
                tape.shape(global),
                tape.shape(mid),
                s.global_shape(),
                s.mid_shape()
            )));
        }
        let up = tape.upsample_nearest(global, &vec![s.mid_cells; s.dims])?;
        let cat = tape.concat_last(&[up, mid])?;
        let fused = affine(tape, cat, vars.linear1)?;
        let up = tape.upsample_nearest(fused, &s.local_spatial())?;
        let cat = tape.concat_last(&[up, local])?;
        affine(tape, cat, vars.linear2)
    }

    /// Per-region flat modulations `[R, (L - 1) * W]`, regions in row-major
    /// cell order (which is flat region order).
    pub fn modulate(&self, tape: &mut Tape, vars: &HlgVars, alpha: Var) -> Result<Var> {
        let s = &self.shape;
        if tape.shape(alpha) != s.alpha_shape().as_slice() {
            return Err(LiftError::Config(format!(
                "Z_alpha {:?} does not match {:?}",
                tape.shape(alpha),
                s.alpha_shape()
            )));
        }
        let m = affine(tape, alpha, vars.modmap)?;
        let regions = s.local_cells.pow(s.dims as u32);
        Ok(tape.reshape(m, &[regions, self.modulation_width()])?)
    }

    /// Untracked `Z_alpha` for concrete latents.
    pub fn compose_values(&self, latents: &LatentHierarchy) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let l = latents.tensors().map(|t| tape.constant(t.clone()));
        let a = self.compose(&mut tape, &vars, l)?;
        Ok(tape.value(a).clone())
    }

    /// Untracked modulations for a concrete `Z_alpha`.
    pub fn modulate_values(&self, alpha: &Tensor, bank: &PMLPBank) -> Result<ModulationSet> {
        self.check_bank(bank)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let a = tape.constant(alpha.clone());
        let m = self.modulate(&mut tape, &vars, a)?;
        let shifts = tape.value(m).reshape(&bank.modulation_shape())?;
        ModulationSet::new(bank, shifts)
    }

    pub fn check_bank(&self, bank: &PMLPBank) -> Result<()> {
        let regions = self.shape.local_cells.pow(self.shape.dims as u32);
        if self.modulation_width() != bank.modulation_width()
            || regions != bank.regions()
            || self.shape.dims != bank.spec.dims()
        {
            return Err(LiftError::Config(format!(
                "generator emits {} cells x {} shifts but bank has {} regions x {} shifts",
                regions,
                self.modulation_width(),
                bank.regions(),
                bank.modulation_width()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    fn toy() -> HlgParams {
        let shape = LatentShape::new(2, 3, (2, 2), (4, 2));
        HlgParams::new(shape, 5, true, true, &mut rng_for(1, 1)).unwrap()
    }

    #[test]
    fn zero_latents_give_zero_alpha() {
        let h = toy();
        let a = h.compose_values(&LatentHierarchy::zeros(&h.shape)).unwrap();
        assert_eq!(a.shape(), &[4, 4, 2]);
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn degenerate_hierarchy_passes_global_through() {
        let mut shape = LatentShape::new(2, 3, (1, 2), (1, 2));
        shape.fused_dim = 3;
        shape.alpha_dim = 3;
        let mut h = HlgParams::new(shape, 3, true, true, &mut rng_for(1, 1)).unwrap();
        // identity on the global channels, zero elsewhere
        h.linear1.weight = Tensor::from_fn(&[5, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        h.linear2.weight = Tensor::from_fn(&[5, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        let mut lat = LatentHierarchy::zeros(&shape);
        lat.global = Tensor::new(&[1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let a = h.compose_values(&lat).unwrap();
        assert_eq!(a.data(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn compose_is_affine_in_latents() {
        let mut h = toy();
        for b in h.all_tensors_mut() {
            if b.shape()[0] == 1 {
                b.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.1 * i as f64);
            }
        }
        let shape = h.shape;
        let rand_lat = |s: u64| {
            let f = |t: &Tensor, k: f64| Tensor::from_fn(t.shape(), |i| ((i as f64 + k) * 1.7 + s as f64).sin());
            let z = LatentHierarchy::zeros(&shape);
            LatentHierarchy { global: f(&z.global, 0.0), mid: f(&z.mid, 1.0), local: f(&z.local, 2.0) }
        };
        let (a, b) = (rand_lat(1), rand_lat(2));
        let sum = LatentHierarchy {
            global: a.global.zip_map(&b.global, |x, y| x + y).unwrap(),
            mid: a.mid.zip_map(&b.mid, |x, y| x + y).unwrap(),
            local: a.local.zip_map(&b.local, |x, y| x + y).unwrap(),
        };
        let ca = h.compose_values(&a).unwrap();
        let cb = h.compose_values(&b).unwrap();
        let c0 = h.compose_values(&LatentHierarchy::zeros(&shape)).unwrap();
        let cs = h.compose_values(&sum).unwrap();
        for i in 0..cs.len() {
            let lin = ca.data()[i] + cb.data()[i] - c0.data()[i];
            assert!((cs.data()[i] - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn lerp_endpoints_are_exact() {
        let h = toy();
        let mut a = LatentHierarchy::zeros(&h.shape);
        a.local.data_mut()[0] = 0.3;
        let b = LatentHierarchy::zeros(&h.shape);
        assert_eq!(LatentHierarchy::lerp(&a, &b, 0.0).unwrap(), a);
        assert_eq!(LatentHierarchy::lerp(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn bad_ratio_is_config_error() {
        let shape = LatentShape::new(2, 3, (3, 2), (4, 2));
        assert!(matches!(shape.validate(), Err(LiftError::Config(_))));
    }
}
