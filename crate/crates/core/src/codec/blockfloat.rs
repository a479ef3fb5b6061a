//! Block-floating-point conversion.
//!
//! The common exponent `emax` satisfies `max|v| < 2^emax <= 2*max|v|`, and
//! each value maps to `round(v * 2^(q - emax))`, so the integers satisfy
//! `|i| <= 2^q` with the largest at least `2^(q-1)`. Stored in a 64-bit word
//! this leaves one sign bit and one guard bit for `q = 62`.

use crate::error::{Error, Result};

/// Common-exponent block of signed integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockFloat {
    pub emax: i32,
    pub ints: Vec<i64>,
    pub q: u32,
}

/// `x * 2^n` without intermediate overflow.
pub fn ldexp(mut x: f64, mut n: i32) -> f64 {
    while n > 1023 {
        x *= f64::from_bits(((1023 + 1023) as u64) << 52);
        n -= 1023;
    }
    while n < -1022 {
        x *= f64::from_bits(1u64 << 52);
        n += 1022;
    }
    x * f64::from_bits(((n + 1023) as u64) << 52)
}

/// Exponent `e` with `|x| = f * 2^e`, `f` in `[0.5, 1)`; `x` nonzero and finite.
pub fn frexp_exp(x: f64) -> i32 {
    let bits = x.abs().to_bits();
    let field = (bits >> 52) as i32;
    if field == 0 {
        frexp_exp(x * 2f64.powi(64)) - 64
    } else {
        field - 1022
    }
}

/// Returns `None` for an all-zero block.
pub fn block_float_encode(values: &[f64], q: u32) -> Result<Option<BlockFloat>> {
    if !(2..=62).contains(&q) {
        return Err(Error::Range(format!("precision q = {q} outside 2..=62")));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let maxabs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if maxabs == 0.0 {
        return Ok(None);
    }
    let emax = frexp_exp(maxabs);
    let shift = q as i32 - emax;
    let ints = values
        .iter()
        .map(|&v| ldexp(v, shift).round_ties_even() as i64)
        .collect();
    Ok(Some(BlockFloat { emax, ints, q }))
}

pub fn block_float_decode(bf: &BlockFloat) -> Vec<f64> {
    let shift = bf.emax - bf.q as i32;
    bf.ints.iter().map(|&i| ldexp(i as f64, shift)).collect()
}
