//! Uniform decomposition of the unit cube into `M^D` regions.
//!
//! Region `m` (1-based) owns the box with corners `a_d = (k_d - 1)/M` and
//! `b_d = k_d/M`, half-open on the left. The lower boundary `x_d = 0` is
//! assigned to `k_d = 1` so every point of `[0, 1]^D` has exactly one owner.
//! Multi-indices are ordered with the first axis most significant, which is
//! also the row-major order of a `[M, .., M]` array.

use crate::error::{LiftError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartitionSpec {
    dims: usize,
    per_dim: usize,
}

/// A region identified both by its flat index and its per-axis indices.
/// Both are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RegionIndex {
    pub flat: usize,
    pub multi: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(dims: usize, per_dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(LiftError::Config(format!(
                "partition dimensionality must be 1, 2 or 3, got {dims}"
            )));
        }
        if per_dim == 0 {
            return Err(LiftError::Config("regions per dimension must be >= 1".into()));
        }
        Ok(Self { dims, per_dim })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn region_count(&self) -> usize {
        self.per_dim.pow(self.dims as u32)
    }

    /// `k_d = floor((m - 1) / M^(D - d)) mod M + 1`.
    pub fn flat_to_multi(&self, flat: usize) -> Result<Vec<usize>> {
        let count = self.region_count();
        if flat == 0 || flat > count {
            return Err(LiftError::Index { index: flat, count });
        }
        let m = self.per_dim;
        Ok((1..=self.dims)
            .map(|d| ((flat - 1) / m.pow((self.dims - d) as u32)) % m + 1)
            .collect())
    }

    pub fn multi_to_flat(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.dims {
            return Err(LiftError::Config(format!(
                "expected {} indices, got {}",
                self.dims,
                multi.len()
            )));
        }
        let mut flat = 0;
        for &k in multi {
            if k == 0 || k > self.per_dim {
                return Err(LiftError::Index {
                    index: k,
                    count: self.per_dim,
                });
            }
            flat = flat * self.per_dim + (k - 1);
        }
        Ok(flat + 1)
    }

    pub fn region(&self, flat: usize) -> Result<RegionIndex> {
        Ok(RegionIndex {
            flat,
            multi: self.flat_to_multi(flat)?,
        })
    }

    fn axis_index(&self, x: f64) -> usize {
        // Smallest k with x <= k/M, clamped so that x = 0 lands in k = 1.
        let m = self.per_dim as f64;
        let mut k = (x * m).ceil() as usize;
        // Guard against rounding in x*M right at a boundary.
        while k > 1 && x <= (k - 1) as f64 / m {
            k -= 1;
        }
        while k < self.per_dim && x > k as f64 / m {
            k += 1;
        }
        k.clamp(1, self.per_dim)
    }

    /// The region owning `x`.
    pub fn locate(&self, x: &[f64]) -> Result<RegionIndex> {
        self.check_point(x)?;
        let multi: Vec<usize> = x.iter().map(|&v| self.axis_index(v)).collect();
        let flat = self.multi_to_flat(&multi)?;
        Ok(RegionIndex { flat, multi })
    }

    /// Indicator `1_m(x)`.
    pub fn contains(&self, region: &RegionIndex, x: &[f64]) -> bool {
        let m = self.per_dim as f64;
        x.iter().zip(&region.multi).all(|(&v, &k)| {
            let (a, b) = ((k - 1) as f64 / m, k as f64 / m);
            (a < v || (k == 1 && v == 0.0)) && v <= b
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims {
            return Err(LiftError::Config(format!(
                "point has {} coordinates, partition has {} axes",
                x.len(),
                self.dims
            )));
        }
        for (axis, &v) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(LiftError::Domain { axis, value: v });
            }
        }
        Ok(())
    }

    /// Maps a point of `region` to the region's own unit cube.
    pub fn to_local(&self, x: &[f64], region: &RegionIndex) -> Result<Vec<f64>> {
        self.check_point(x)?;
        if !self.contains(region, x) {
            return Err(LiftError::Consistency {
                point: x.to_vec(),
                region: region.multi.clone(),
            });
        }
        let m = self.per_dim as f64;
        Ok(x.iter()
            .zip(&region.multi)
            .map(|(&v, &k)| (v - (k - 1) as f64 / m) * m)
            .collect())
    }

    pub fn from_local(&self, local: &[f64], region: &RegionIndex) -> Vec<f64> {
        let m = self.per_dim as f64;
        local
            .iter()
            .zip(&region.multi)
            .map(|(&u, &k)| u / m + (k - 1) as f64 / m)
            .collect()
    }
}

/// Grid points grouped by region. Regions appear in flat-index order;
/// within a region points follow row-major order of the region's block.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPartition {
    pub spec: PartitionSpec,
    pub grid_shape: Vec<usize>,
    pub points_per_region: usize,
    /// `global[r][j]` is the row-major flat grid index of point `j` in region `r`.
    pub global: Vec<Vec<usize>>,
    /// Local coordinates, `[R, points_per_region, D]` flattened row-major.
    pub local_coords: Vec<f64>,
}

/// Splits a grid into per-region index blocks: the first `N_d / M` indices
/// of each axis belong to `k_d = 1`, and so on. Local coordinates are
/// `(x_d - a_d) * M` with grid coordinate `x_d = i_d / (N_d - 1)`.
pub fn grid_partition(grid_shape: &[usize], spec: &PartitionSpec) -> Result<GridPartition> {
    if grid_shape.len() != spec.dims() {
        return Err(LiftError::Config(format!(
            "grid has {} axes but partition has {}",
            grid_shape.len(),
            spec.dims()
        )));
    }
    let m = spec.per_dim();
    for &n in grid_shape {
        if n % m != 0 {
            let valid: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
            return Err(LiftError::Config(format!(
                "grid extent {n} is not divisible by {m} regions per axis; valid choices: {valid:?}"
            )));
        }
    }
    let d = spec.dims();
    let block: Vec<usize> = grid_shape.iter().map(|&n| n / m).collect();
    let per_region: usize = block.iter().product();
    let regions = spec.region_count();
    let mut global = Vec::with_capacity(regions);
    let mut local_coords = Vec::with_capacity(regions * per_region * d);
    let mut idx = vec![0usize; d];
    for flat in 1..=regions {
        let multi = spec.flat_to_multi(flat)?;
        let mut ids = Vec::with_capacity(per_region);
        for j in 0..per_region {
            // j -> position inside the block, row-major
            let mut rem = j;
            for ax in (0..d).rev() {
                idx[ax] = (multi[ax] - 1) * block[ax] + rem % block[ax];
                rem /= block[ax];
            }
            let mut g = 0;
            for ax in 0..d {
                g = g * grid_shape[ax] + idx[ax];
                let n = grid_shape[ax];
                let x = if n > 1 {
                    idx[ax] as f64 / (n - 1) as f64
                } else {
                    0.0
                };
                local_coords.push((x - (multi[ax] - 1) as f64 / m as f64) * m as f64);
            }
            ids.push(g);
        }
        global.push(ids);
    }
    Ok(GridPartition {
        spec: *spec,
        grid_shape: grid_shape.to_vec(),
        points_per_region: per_region,
        global,
        local_coords,
    })
}

impl GridPartition {
    pub fn region_count(&self) -> usize {
        self.global.len()
    }

    pub fn grid_len(&self) -> usize {
        self.grid_shape.iter().product()
    }

    /// Gathers channels-last grid values `[N.., C]` into `[R, n, C]` order.
    pub fn scatter(&self, values: &[f64], channels: usize) -> Result<Vec<f64>> {
        if values.len() != self.grid_len() * channels {
            return Err(LiftError::Shape(format!(
                "grid values have length {}, expected {}",
                values.len(),
                self.grid_len() * channels
            )));
        }
        let mut out = Vec::with_capacity(values.len());
        for ids in &self.global {
            for &g in ids {
                out.extend_from_slice(&values[g * channels..(g + 1) * channels]);
            }
        }
        Ok(out)
    }

    /// Inverse of [`GridPartition::scatter`].
    pub fn assemble(&self, per_region: &[f64], channels: usize) -> Result<Vec<f64>> {
        assemble(&self.global, per_region, channels, self.grid_len())
    }
}

/// Writes per-region outputs `[R, n, C]` back to a channels-last grid of
/// `grid_len` points, checking that `index_map` covers every grid point once.
pub fn assemble(
    index_map: &[Vec<usize>],
    per_region: &[f64],
    channels: usize,
    grid_len: usize,
) -> Result<Vec<f64>> {
    let total: usize = index_map.iter().map(Vec::len).sum();
    if total != grid_len {
        return Err(LiftError::Assembly(format!(
            "regions cover {total} points but the grid has {grid_len}"
        )));
    }
    if per_region.len() != total * channels {
        return Err(LiftError::Assembly(format!(
            "per-region output length {} does not match {} points x {} channels",
            per_region.len(),
            total,
            channels
        )));
    }
    let mut out = vec![0.0; grid_len * channels];
    let mut seen = vec![false; grid_len];
    let mut src = 0;
    for ids in index_map {
        for &g in ids {
            if g >= grid_len {
                return Err(LiftError::Assembly(format!("grid index {g} out of range")));
            }
            if std::mem::replace(&mut seen[g], true) {
                return Err(LiftError::Assembly(format!("grid index {g} assigned twice")));
            }
            out[g * channels..(g + 1) * channels]
                .copy_from_slice(&per_region[src * channels..(src + 1) * channels]);
            src += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_to_multi_examples() {
        let s = PartitionSpec::new(2, 2).unwrap();
        assert_eq!(s.flat_to_multi(1).unwrap(), vec![1, 1]);
        assert_eq!(s.flat_to_multi(2).unwrap(), vec![1, 2]);
        assert_eq!(s.flat_to_multi(4).unwrap(), vec![2, 2]);
        assert!(matches!(s.flat_to_multi(5), Err(LiftError::Index { .. })));
        let s3 = PartitionSpec::new(3, 8).unwrap();
        assert_eq!(s3.flat_to_multi(1).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn locate_examples() {
        let s = PartitionSpec::new(2, 2).unwrap();
        assert_eq!(s.locate(&[0.3, 0.7]).unwrap().multi, vec![1, 2]);
        assert_eq!(s.locate(&[0.0, 0.0]).unwrap().multi, vec![1, 1]);
        assert_eq!(s.locate(&[1.0, 1.0]).unwrap().multi, vec![2, 2]);
        assert_eq!(s.locate(&[0.5, 0.5]).unwrap().multi, vec![1, 1]);
        assert!(matches!(s.locate(&[1.2, 0.0]), Err(LiftError::Domain { axis: 0, .. })));
    }

    #[test]
    fn to_local_examples() {
        let s = PartitionSpec::new(2, 2).unwrap();
        let r = |f| s.region(f).unwrap();
        assert_eq!(s.to_local(&[0.0, 0.0], &r(1)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.to_local(&[1.0, 1.0], &r(4)).unwrap(), vec![1.0, 1.0]);
        assert_eq!(s.to_local(&[0.25, 0.75], &r(2)).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            s.to_local(&[0.75, 0.75], &r(2)),
            Err(LiftError::Consistency { .. })
        ));
    }

    #[test]
    fn grid_partition_counts() {
        let s = PartitionSpec::new(2, 2).unwrap();
        let g = grid_partition(&[4, 4], &s).unwrap();
        assert_eq!(g.region_count(), 4);
        assert_eq!(g.points_per_region, 4);
        let s8 = PartitionSpec::new(2, 8).unwrap();
        let g = grid_partition(&[64, 64], &s8).unwrap();
        assert_eq!(g.region_count(), 64);
        assert_eq!(g.points_per_region, 64);
    }

    #[test]
    fn indivisible_grid_suggests_valid_counts() {
        let s = PartitionSpec::new(1, 3).unwrap();
        let err = grid_partition(&[8], &s).unwrap_err().to_string();
        assert!(err.contains("[1, 2, 4, 8]"), "{err}");
    }

    #[test]
    fn assemble_rejects_duplicates() {
        let map = vec![vec![0, 1], vec![1, 2]];
        assert!(assemble(&map, &[0.0; 4], 1, 4).is_err());
        let map = vec![vec![0, 1], vec![1, 0]];
        assert!(matches!(assemble(&map, &[0.0; 4], 1, 4), Err(LiftError::Assembly(_))));
    }
}
