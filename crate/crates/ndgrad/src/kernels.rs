//! Forward kernels shared by the tape ops. These work on plain tensors and
//! know nothing about gradients.

use crate::error::{GradError, Result};
use crate::tensor::{numel, Tensor};

/// Logical `(rows, cols)` of the last two dims, after an optional transpose.
fn mat_dims(shape: &[usize], trans: bool) -> (usize, usize) {
    let r = shape[shape.len() - 2];
    let c = shape[shape.len() - 1];
    if trans {
        (c, r)
    } else {
        (r, c)
    }
}

/// Output shape of `op(a) @ op(b)`. Either both operands are matrices, or
/// both carry identical leading batch dims.
pub fn matmul_shape(a: &[usize], b: &[usize], ta: bool, tb: bool) -> Result<Vec<usize>> {
    let err = || GradError::Shape {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() != a.len() || a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(err());
    }
    let (p, q) = mat_dims(a, ta);
    let (q2, r) = mat_dims(b, tb);
    if q != q2 {
        return Err(err());
    }
    let mut out = a[..a.len() - 2].to_vec();
    out.push(p);
    out.push(r);
    Ok(out)
}

pub fn matmul(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
    let out_shape = matmul_shape(a.shape(), b.shape(), ta, tb)?;
    let (sa, sb) = (a.shape(), b.shape());
    let batch: usize = sa[..sa.len() - 2].iter().product();
    let (p, q) = mat_dims(sa, ta);
    let (_, r) = mat_dims(sb, tb);
    let a_cols = sa[sa.len() - 1];
    let b_cols = sb[sb.len() - 1];
    let (rsa, csa) = if ta { (1, a_cols) } else { (a_cols, 1) };
    let (rsb, csb) = if tb { (1, b_cols) } else { (b_cols, 1) };
    let total = numel(&out_shape);
    if q == 0 || total == 0 {
        return Ok(Tensor::zeros(&out_shape));
    }
    let mut out: Vec<f64> = Vec::with_capacity(total);
    let (a_step, b_step, c_step) = (p * q, q * r, p * r);
    for i in 0..batch {
        let a_ptr = a.data()[i * a_step..].as_ptr();
        let b_ptr = b.data()[i * b_step..].as_ptr();
        // SAFETY: `out` has capacity for `batch` blocks of `p*r`.
        let c_ptr = unsafe { out.as_mut_ptr().add(i * c_step) };
        // SAFETY: each pointer addresses a live buffer holding a full
        // `p*q`, `q*r` or `p*r` block at the given strides, checked above.
        // With beta = 0 the output block is written without being read.
        unsafe {
            matrixmultiply::dgemm(
                p,
                q,
                r,
                1.0,
                a_ptr,
                rsa as isize,
                csa as isize,
                b_ptr,
                rsb as isize,
                csb as isize,
                0.0,
                c_ptr,
                r as isize,
                1,
            );
        }
    }
    // SAFETY: every block was fully written by dgemm above.
    unsafe { out.set_len(total) };
    Tensor::new(&out_shape, out)
}

/// Checks that `from` broadcasts to `to` (right-aligned, dims of 1 stretch).
pub fn check_broadcast(from: &[usize], to: &[usize]) -> Result<()> {
    let err = || GradError::Shape {
        op: "broadcast",
        lhs: from.to_vec(),
        rhs: to.to_vec(),
    };
    if from.len() > to.len() {
        return Err(err());
    }
    let pad = to.len() - from.len();
    for (i, &d) in from.iter().enumerate() {
        if d != 1 && d != to[pad + i] {
            return Err(err());
        }
    }
    Ok(())
}

/// Common shape of two operands under right-aligned broadcasting.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(GradError::Shape {
                    op: "broadcast",
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// Input strides for reading `from` as if it had shape `to` (0 on
/// broadcast dims).
fn broadcast_strides(from: &[usize], to: &[usize]) -> Vec<usize> {
    let pad = to.len() - from.len();
    let mut strides = vec![0; to.len()];
    let mut acc = 1;
    for i in (0..from.len()).rev() {
        strides[pad + i] = if from[i] == 1 { 0 } else { acc };
        acc *= from[i];
    }
    strides
}

/// Visits every output multi-index of `shape` in row-major order, calling
/// `f(out_offset, in_offset)` with the input offset given by `strides`.
fn for_each_strided(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n = numel(shape);
    if shape.is_empty() {
        f(0, 0);
        return;
    }
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut in_off = 0usize;
    for out_off in 0..n {
        f(out_off, in_off);
        // increment
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            in_off += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            in_off -= strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Splits a broadcast from `from` to `to` into an outer strided walk and
/// an inner run of trailing dims that match exactly, which are contiguous
/// in both. Returns (outer shape, outer input strides, inner length).
fn blocked(from: &[usize], to: &[usize]) -> (Vec<usize>, Vec<usize>, usize) {
    let strides = broadcast_strides(from, to);
    let pad = to.len() - from.len();
    let mut split = to.len();
    while split > pad && from[split - 1 - pad] == to[split - 1] {
        split -= 1;
    }
    let inner = numel(&to[split..]);
    (to[..split].to_vec(), strides[..split].to_vec(), inner)
}

pub fn broadcast_to(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    check_broadcast(x.shape(), shape)?;
    if x.shape() == shape {
        return Ok(x.clone());
    }
    let src = x.data();
    if src.len() == 1 {
        return Ok(Tensor::full(shape, src[0]));
    }
    let (outer, strides, inner) = blocked(x.shape(), shape);
    let mut out = Vec::with_capacity(numel(shape));
    // Outer blocks are visited in output order.
    for_each_strided(&outer, &strides, |_, i| out.extend_from_slice(&src[i..i + inner]));
    Tensor::new(shape, out)
}

/// Sums `x` down to `shape`; the adjoint of [`broadcast_to`].
pub fn sum_to(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    check_broadcast(shape, x.shape())?;
    if x.shape() == shape {
        return Ok(x.clone());
    }
    let src = x.data();
    if numel(shape) == 1 {
        return Tensor::new(shape, vec![x.sum()]);
    }
    let (outer, strides, inner) = blocked(shape, x.shape());
    let mut out = vec![0.0; numel(shape)];
    for_each_strided(&outer, &strides, |o, i| {
        for (d, s) in out[i..i + inner].iter_mut().zip(&src[o * inner..(o + 1) * inner]) {
            *d += s;
        }
    });
    Tensor::new(shape, out)
}

/// Spatial dims of `[s_1, .., s_D, C]` against per-dim integer factors.
fn check_factors(shape: &[usize], factors: &[usize]) -> Result<()> {
    if shape.len() != factors.len() + 1 || factors.iter().any(|&f| f == 0) {
        return Err(GradError::Invalid(format!(
            "factors {factors:?} do not fit spatial shape {shape:?}"
        )));
    }
    Ok(())
}

/// Nearest-neighbour upsampling of a channels-last grid by integer factors.
pub fn upsample_nearest(x: &Tensor, factors: &[usize]) -> Result<Tensor> {
    check_factors(x.shape(), factors)?;
    let xs = x.shape();
    let d = factors.len();
    let mut out_shape: Vec<usize> = xs[..d].iter().zip(factors).map(|(s, f)| s * f).collect();
    out_shape.push(xs[d]);
    let in_strides = row_major_strides(xs);
    let src = x.data();
    let mut out = Vec::with_capacity(numel(&out_shape));
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..numel(&out_shape) {
        let mut i = idx[d];
        for k in 0..d {
            i += (idx[k] / factors[k]) * in_strides[k];
        }
        out.push(src[i]);
        increment(&mut idx, &out_shape);
    }
    Tensor::new(&out_shape, out)
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    let mut k = shape.len();
    while k > 0 {
        k -= 1;
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// Block sums over `factors`-sized cells; the adjoint of
/// [`upsample_nearest`].
pub fn sum_pool(x: &Tensor, factors: &[usize]) -> Result<Tensor> {
    check_factors(x.shape(), factors)?;
    let xs = x.shape();
    let d = factors.len();
    for k in 0..d {
        if xs[k] % factors[k] != 0 {
            return Err(GradError::UpsampleRatio {
                from: xs.to_vec(),
                to: factors.to_vec(),
            });
        }
    }
    let mut out_shape: Vec<usize> = xs[..d].iter().zip(factors).map(|(s, f)| s / f).collect();
    out_shape.push(xs[d]);
    let out_strides = row_major_strides(&out_shape);
    let src = x.data();
    let mut out = vec![0.0; numel(&out_shape)];
    let mut idx = vec![0usize; xs.len()];
    for &v in src {
        let mut o = idx[d];
        for k in 0..d {
            o += (idx[k] / factors[k]) * out_strides[k];
        }
        out[o] += v;
        increment(&mut idx, xs);
    }
    Tensor::new(&out_shape, out)
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

pub fn concat_last(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| GradError::Invalid("concat of zero tensors".into()))?;
    let lead = &first.shape()[..first.rank().saturating_sub(1)];
    if first.rank() == 0 {
        return Err(GradError::Invalid("concat of rank-0 tensors".into()));
    }
    let mut total = 0;
    for p in parts {
        if p.rank() != first.rank() || &p.shape()[..p.rank() - 1] != lead {
            return Err(GradError::Shape {
                op: "concat_lastdim",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
        total += p.shape()[p.rank() - 1];
    }
    let rows = numel(lead);
    let mut out = Vec::with_capacity(rows * total);
    for row in 0..rows {
        for p in parts {
            let w = p.shape()[p.rank() - 1];
            out.extend_from_slice(&p.data()[row * w..(row + 1) * w]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Tensor::new(&shape, out)
}

pub fn slice_last(x: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let w = *x
        .shape()
        .last()
        .ok_or_else(|| GradError::Invalid("slice of rank-0 tensor".into()))?;
    if start + len > w || len == 0 {
        return Err(GradError::Invalid(format!(
            "slice [{start}, {}) out of last dim {w}",
            start + len
        )));
    }
    let rows = x.len() / w;
    let mut out = Vec::with_capacity(rows * len);
    for row in 0..rows {
        out.extend_from_slice(&x.data()[row * w + start..row * w + start + len]);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = len;
    Tensor::new(&shape, out)
}

/// Zero-pads the last dim so `x` lands at `[start, start+len)` of `total`.
pub fn pad_last(x: &Tensor, start: usize, total: usize) -> Result<Tensor> {
    let w = *x
        .shape()
        .last()
        .ok_or_else(|| GradError::Invalid("pad of rank-0 tensor".into()))?;
    if start + w > total {
        return Err(GradError::Invalid(format!(
            "pad [{start}, {}) exceeds {total}",
            start + w
        )));
    }
    let rows = x.len() / w;
    let mut out = vec![0.0; rows * total];
    for row in 0..rows {
        out[row * total + start..row * total + start + w]
            .copy_from_slice(&x.data()[row * w..(row + 1) * w]);
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = total;
    Tensor::new(&shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_cos_tracks_libm() {
        let mut worst = 0.0f64;
        for k in 0..200_001 {
            let x = -2000.0 + 0.02 * k as f64 + 1e-7 * (k % 7) as f64;
            let (s, c) = sin_cos(x);
            worst = worst.max((s - x.sin()).abs()).max((c - x.cos()).abs());
        }
        assert!(worst < 1e-15, "{worst}");
        assert_eq!(sin_cos(0.0), (0.0, 1.0));
        let (s, c) = sin_cos(3.0e7);
        assert_eq!((s, c), (3.0e7f64.sin(), 3.0e7f64.cos()));
        assert!(sin_cos(f64::NAN).0.is_nan());
    }

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = t(&[2, 1], &[3.0, 4.0]);
        assert_eq!(matmul(&id, &b, false, false).unwrap().data(), &[3.0, 4.0]);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(matmul(&z, &b, false, false).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_hand_example() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[5.0, 6.0]);
        assert_eq!(matmul(&a, &b, false, false).unwrap().data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_transposes_match_explicit() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[2, 2], &[1.0, -1.0, 2.0, 0.5]);
        // a^T b : [3,2]x[2,2]
        let c = matmul(&a, &b, true, false).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.data(), &[9.0, 1.0, 12.0, 0.5, 15.0, 0.0]);
        // b a with b^T : [2,2]^T x [2,3]
        let d = matmul(&b, &a, true, false).unwrap();
        assert_eq!(d.data(), &[9.0, 12.0, 15.0, 1.0, 0.5, 0.0]);
        let e = matmul(&a, &a, false, true).unwrap();
        assert_eq!(e.data(), &[14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = matmul(&a, &b, false, false).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn batched_matmul_loops_over_leading_dims() {
        let a = Tensor::from_fn(&[2, 2, 2], |i| i as f64);
        let b = Tensor::from_fn(&[2, 2, 1], |i| 1.0 + i as f64);
        let c = matmul(&a, &b, false, false).unwrap();
        // batch0: [[0,1],[2,3]]x[1,2] = [2,8]; batch1: [[4,5],[6,7]]x[3,4] = [32,46]
        assert_eq!(c.data(), &[2.0, 8.0, 32.0, 46.0]);
    }

    #[test]
    fn broadcast_and_sum_to_are_adjoint_shapes() {
        let b = t(&[3], &[1.0, 2.0, 3.0]);
        let big = broadcast_to(&b, &[2, 3]).unwrap();
        assert_eq!(big.data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let back = sum_to(&big, &[3]).unwrap();
        assert_eq!(back.data(), &[2.0, 4.0, 6.0]);
        let col = t(&[2, 1], &[1.0, 2.0]);
        let big = broadcast_to(&col, &[2, 3]).unwrap();
        assert_eq!(big.data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(sum_to(&big, &[2, 1]).unwrap().data(), &[3.0, 6.0]);
        let s = Tensor::scalar(2.0);
        assert_eq!(broadcast_to(&s, &[2, 2]).unwrap().data(), &[2.0; 4]);
        assert_eq!(sum_to(&Tensor::ones(&[2, 2]), &[]).unwrap().data(), &[4.0]);
    }

    #[test]
    fn upsample_constant_replication() {
        let x = t(&[1, 1, 1], &[5.0]);
        let y = upsample_nearest(&x, &[2, 2]).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[5.0; 4]);
    }

    #[test]
    fn upsample_blocks_enumerated() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let y = upsample_nearest(&x, &[2, 2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = x.at(&[i / 2, j / 2, 0]);
                assert_eq!(y.at(&[i, j, 0]), expected, "({i},{j})");
            }
        }
        let pooled = sum_pool(&y, &[2, 2]).unwrap();
        assert_eq!(pooled.data(), &[4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn upsample_multichannel_3d() {
        let x = Tensor::from_fn(&[2, 1, 2, 2], |i| i as f64);
        let y = upsample_nearest(&x, &[2, 3, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 3, 2, 2]);
        for a in 0..4 {
            for b in 0..3 {
                for c in 0..2 {
                    for ch in 0..2 {
                        assert_eq!(y.at(&[a, b, c, ch]), x.at(&[a / 2, 0, c, ch]));
                    }
                }
            }
        }
    }

    #[test]
    fn concat_slice_pad() {
        let a = Tensor::ones(&[2, 2, 3]);
        let b = Tensor::zeros(&[2, 2, 5]);
        let c = concat_last(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 2, 8]);
        assert_eq!(slice_last(&c, 0, 3).unwrap(), a);
        assert_eq!(slice_last(&c, 3, 5).unwrap(), b);
        let p = pad_last(&a, 2, 6).unwrap();
        assert_eq!(&p.data()[..6], &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    }
}

const PIO2_HI: f64 = 1.570_796_326_734_125_614_17;
const PIO2_MID: f64 = 6.077_100_506_303_965_976_60e-11;
const PIO2_LO: f64 = 2.022_266_248_711_166_455_80e-21;
const REDUCE_LIMIT: f64 = 1.0e5;

/// `(sin x, cos x)` sharing one argument reduction. Within about one ulp
/// of libm for `|x| < 1e5`; larger or non-finite inputs fall back to libm.
#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < REDUCE_LIMIT) {
        return (x.sin(), x.cos());
    }
    // Round to nearest by the 1.5 * 2^52 shift; exact for |x| < 2^51.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let n = (x * std::f64::consts::FRAC_2_PI + SHIFT) - SHIFT;
    let r = ((x - n * PIO2_HI) - n * PIO2_MID) - n * PIO2_LO;
    let (s, c) = (sin_poly(r), cos_poly(r));
    match (n as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

#[inline]
fn sin_poly(x: f64) -> f64 {
    const S1: f64 = -1.666_666_666_666_663_243_48e-01;
    const S2: f64 = 8.333_333_333_322_489_461_24e-03;
    const S3: f64 = -1.984_126_982_985_794_931_34e-04;
    const S4: f64 = 2.755_731_370_707_006_767_89e-06;
    const S5: f64 = -2.505_076_025_340_686_341_95e-08;
    const S6: f64 = 1.589_690_995_211_550_102_21e-10;
    let z = x * x;
    let p = S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)));
    x + x * z * (S1 + z * p)
}

#[inline]
fn cos_poly(x: f64) -> f64 {
    const C1: f64 = 4.166_666_666_666_660_190_37e-02;
    const C2: f64 = -1.388_888_888_887_410_957_49e-03;
    const C3: f64 = 2.480_158_728_947_672_941_78e-05;
    const C4: f64 = -2.755_731_435_139_066_330_35e-07;
    const C5: f64 = 2.087_572_321_298_174_827_90e-09;
    const C6: f64 = -1.135_964_755_778_819_482_65e-11;
    let z = x * x;
    let p = z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    w + (((1.0 - w) - hz) + z * p)
}

/// Elementwise `amp sin(omega x)` and `amp cos(omega x)` in one pass.
pub fn sin_cos_scaled(x: &Tensor, omega: f64) -> (Tensor, Tensor) {
    let mut s = Vec::with_capacity(x.len());
    let mut c = Vec::with_capacity(x.len());
    for &v in x.data() {
        let (a, b) = sin_cos(omega * v);
        s.push(a);
        c.push(b);
    }
    (
        Tensor::new(x.shape(), s).expect("same shape"),
        Tensor::new(x.shape(), c).expect("same shape"),
    )
}
