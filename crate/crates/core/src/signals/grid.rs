use ndgrad::Tensor;

use crate::error::{LiftError, Result};

/// Where grid samples sit in coordinate space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampling {
    /// `x = i / (N - 1)`, both ends of `[0, 1]` included.
    Unit,
    /// `x = lo + (hi - lo) i / N`, the upper end excluded, for signals that
    /// are treated as one period of a periodic function.
    Periodic { lo: f64, hi: f64 },
}

/// A sampled signal: channels-last values `[N_1, .., N_D, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalGrid {
    pub values: Tensor,
    pub source: String,
    pub sampling: Sampling,
}

impl SignalGrid {
    pub fn new(values: Tensor, source: impl Into<String>) -> Result<Self> {
        if values.rank() < 2 || values.rank() > 4 {
            return Err(LiftError::Shape(format!(
                "signal values must be [N.., C] with 1 to 3 spatial axes, got {:?}",
                values.shape()
            )));
        }
        if !values.all_finite() {
            return Err(LiftError::Numeric("signal contains non-finite values".into()));
        }
        Ok(Self {
            values,
            source: source.into(),
            sampling: Sampling::Unit,
        })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn dims(&self) -> usize {
        self.values.rank() - 1
    }

    pub fn spatial(&self) -> &[usize] {
        &self.values.shape()[..self.dims()]
    }

    pub fn channels(&self) -> usize {
        *self.values.shape().last().expect("rank >= 2")
    }

    pub fn points(&self) -> usize {
        self.spatial().iter().product()
    }

    /// Coordinate of index `i` along an axis of extent `n`.
    pub fn coordinate(&self, i: usize, n: usize) -> f64 {
        match self.sampling {
            Sampling::Unit if n > 1 => i as f64 / (n - 1) as f64,
            Sampling::Unit => 0.0,
            Sampling::Periodic { lo, hi } => lo + (hi - lo) * i as f64 / n as f64,
        }
    }

    /// All sample coordinates in row-major order, `[points, D]`.
    pub fn coords(&self) -> Tensor {
        let shape = self.spatial().to_vec();
        let d = shape.len();
        let n = self.points();
        let mut data = Vec::with_capacity(n * d);
        for p in 0..n {
            let mut rem = p;
            let mut idx = vec![0; d];
            for ax in (0..d).rev() {
                idx[ax] = rem % shape[ax];
                rem /= shape[ax];
            }
            for ax in 0..d {
                data.push(self.coordinate(idx[ax], shape[ax]));
            }
        }
        Tensor::new(&[n, d], data).expect("coordinate count matches")
    }

    /// Values as `[points, C]`.
    pub fn flat_values(&self) -> Tensor {
        self.values
            .reshape(&[self.points(), self.channels()])
            .expect("same element count")
    }

    pub fn same_shape(&self, other: &SignalGrid) -> Result<()> {
        if self.values.shape() != other.values.shape() {
            return Err(LiftError::Shape(format!(
                "{:?} vs {:?}",
                self.values.shape(),
                other.values.shape()
            )));
        }
        Ok(())
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .data()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_coordinates_hit_both_ends() {
        let g = SignalGrid::new(Tensor::zeros(&[3, 5, 1]), "t").unwrap();
        let c = g.coords();
        assert_eq!(c.shape(), &[15, 2]);
        assert_eq!(&c.data()[..2], &[0.0, 0.0]);
        assert_eq!(&c.data()[2..4], &[0.0, 0.25]);
        assert_eq!(&c.data()[28..], &[1.0, 1.0]);
    }

    #[test]
    fn coordinate_round_trip() {
        let g = SignalGrid::new(Tensor::zeros(&[17, 1]), "t").unwrap();
        for i in 0..17 {
            let x = g.coordinate(i, 17);
            assert_eq!((x * 16.0).round() as usize, i);
        }
    }

    #[test]
    fn periodic_excludes_upper_end() {
        let g = SignalGrid::new(Tensor::zeros(&[4, 1]), "t")
            .unwrap()
            .with_sampling(Sampling::Periodic { lo: -1.0, hi: 1.0 });
        assert_eq!(g.coords().data(), &[-1.0, -0.5, 0.0, 0.5]);
    }
}
