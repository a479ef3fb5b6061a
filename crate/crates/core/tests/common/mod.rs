#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Block of `4^d` values with signs random and magnitudes `m * 2^e`,
/// `m` in [0.5, 1), `e` uniform in `[-8, 8]`.
pub fn random_block(r: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..4usize.pow(d as u32))
        .map(|_| {
            let m: f64 = r.gen_range(0.5..1.0);
            let e: i32 = r.gen_range(-8..=8);
            let s = if r.gen_bool(0.5) { -1.0 } else { 1.0 };
            s * m * 2f64.powi(e)
        })
        .collect()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `16^d T_d x` by explicit matrix products in exact integers.
pub fn exact_forward_scaled(x: &[i64], d: usize) -> Vec<i128> {
    const T16: [[i128; 4]; 4] = [[4, 4, 4, 4], [5, 1, -1, -5], [-4, 4, 4, -4], [-2, 6, -6, 2]];
    let n = x.len();
    let mut v: Vec<i128> = x.iter().map(|&a| a as i128).collect();
    for axis in 0..d {
        let stride = 4usize.pow((d - 1 - axis) as u32);
        let mut out = v.clone();
        for base in (0..n).filter(|b| (b / stride) % 4 == 0) {
            for r in 0..4 {
                out[base + r * stride] = (0..4).map(|c| T16[r][c] * v[base + c * stride]).sum();
            }
        }
        v = out;
    }
    v
}
