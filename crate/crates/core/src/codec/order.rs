//! Total-sequency ordering of transform coefficients.

use crate::error::{Error, Result};

/// `perm[r]` is the block-local index of the coefficient emitted `r`-th.
///
/// Coefficients are sorted by the sum of their per-axis sequency indices;
/// ties keep row-major (lexicographic) order.
pub fn sequency_order(d: usize) -> Result<Vec<usize>> {
    if !(1..=3).contains(&d) {
        return Err(Error::Dimension(d));
    }
    let n = 4usize.pow(d as u32);
    let coord_sum = |mut i: usize| {
        let mut s = 0;
        for _ in 0..d {
            s += i % 4;
            i /= 4;
        }
        s
    };
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by_key(|&i| (coord_sum(i), i));
    Ok(perm)
}

pub fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (r, &i) in perm.iter().enumerate() {
        inv[i] = r;
    }
    inv
}
