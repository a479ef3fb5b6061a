//! Fixed-point decorrelating transform.
//!
//! The integer lifting steps approximate
//! `T = 1/16 [[4,4,4,4],[5,1,-1,-5],[-4,4,4,-4],[-2,6,-6,2]]`
//! applied along every axis of a `4^d` block. Intermediates are computed in
//! `i128` so inputs at the full `2^q` headroom cannot overflow.

use crate::error::{Error, Result};

/// Numerators of `16 T`.
pub const FORWARD_16: [[i64; 4]; 4] = [[4, 4, 4, 4], [5, 1, -1, -5], [-4, 4, 4, -4], [-2, 6, -6, 2]];
/// Numerators of `4 T^-1`.
pub const INVERSE_4: [[i64; 4]; 4] = [[4, 6, -4, -1], [4, 2, 4, 5], [4, -2, 4, -5], [4, -6, -4, 1]];

fn fwd_lift(v: [i128; 4]) -> [i128; 4] {
    let [mut x, mut y, mut z, mut w] = v;
    x += w;
    x >>= 1;
    w -= x;
    z += y;
    z >>= 1;
    y -= z;
    x += z;
    x >>= 1;
    z -= x;
    w += y;
    w >>= 1;
    y -= w;
    w += y >> 1;
    y -= w >> 1;
    [x, y, z, w]
}

fn inv_lift(v: [i128; 4]) -> [i128; 4] {
    let [mut x, mut y, mut z, mut w] = v;
    y += w >> 1;
    w -= y >> 1;
    y += w;
    w <<= 1;
    w -= y;
    z += x;
    x <<= 1;
    x -= z;
    y += z;
    z <<= 1;
    z -= y;
    w += x;
    x <<= 1;
    x -= w;
    [x, y, z, w]
}

fn along_axes(ints: &mut [i64], d: usize, axes: &[usize], lift: fn([i128; 4]) -> [i128; 4]) {
    let n = ints.len();
    for &axis in axes {
        // Row-major block layout: the last axis is contiguous.
        let stride = 4usize.pow((d - 1 - axis) as u32);
        for base in 0..n {
            if (base / stride) % 4 != 0 {
                continue;
            }
            let idx = [base, base + stride, base + 2 * stride, base + 3 * stride];
            let out = lift(idx.map(|i| ints[i] as i128));
            for (i, o) in idx.into_iter().zip(out) {
                ints[i] = o as i64;
            }
        }
    }
}

fn check(ints: &[i64], d: usize, q: u32) -> Result<()> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    if ints.len() != 4usize.pow(d as u32) {
        return Err(Error::Range(format!("block of {} values for d = {d}", ints.len())));
    }
    let limit = 1i64 << q;
    if let Some(&v) = ints.iter().find(|v| v.unsigned_abs() > limit as u64) {
        return Err(Error::Overflow(v, q));
    }
    Ok(())
}

/// Forward transform in place; requires `|int| <= 2^q`.
pub fn forward_transform(ints: &mut [i64], d: usize, q: u32) -> Result<()> {
    check(ints, d, q)?;
    let axes: Vec<usize> = (0..d).rev().collect();
    along_axes(ints, d, &axes, fwd_lift);
    Ok(())
}

/// Inverse transform in place.
pub fn inverse_transform(ints: &mut [i64], d: usize, q: u32) -> Result<()> {
    check(ints, d, q + 1)?;
    let axes: Vec<usize> = (0..d).collect();
    along_axes(ints, d, &axes, inv_lift);
    Ok(())
}
