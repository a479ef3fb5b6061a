//! Single-block pipeline and embedded coder.

use super::bitstream::{BitReader, BitWriter};
use super::blockfloat::{block_float_decode, block_float_encode, BlockFloat};
use super::order::{invert, sequency_order};
use super::transform::{forward_transform, inverse_transform};
use crate::error::{Error, Result};
use crate::numrep::{nb_decode64, nb_encode64};

/// Planes per length-prefixed group in the payload. A group of `p` planes
/// over `s` coefficients codes in at most `p (s + 1) + s` bits, which
/// keeps every group within the 255-byte length prefix.
pub const fn planes_per_group(d: usize) -> u32 {
    if d >= 3 {
        16
    } else {
        64
    }
}

/// Codec configuration: dimension, block-float precision and planes kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CodecParams {
    pub d: usize,
    pub q: u32,
    pub beta: u32,
}

impl CodecParams {
    /// Double-precision source (`q = 62`).
    pub fn double(d: usize, beta: u32) -> Result<Self> {
        Self::new(d, 62, beta)
    }

    pub fn new(d: usize, q: u32, beta: u32) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if !(2..=62).contains(&q) {
            return Err(Error::Range(format!("precision q = {q} outside 2..=62")));
        }
        let p = Self { d, q, beta };
        if beta > p.plane_count() {
            return Err(Error::Range(format!(
                "beta = {beta} exceeds the {} available bit planes",
                p.plane_count()
            )));
        }
        Ok(p)
    }

    pub fn block_len(&self) -> usize {
        4usize.pow(self.d as u32)
    }

    /// Negabinary word width, `q + 2`.
    pub fn plane_count(&self) -> u32 {
        self.q + 2
    }

    /// Largest `beta` for which decompression adds no loss beyond the final
    /// conversion, `q - 2d + 2`.
    pub fn lossless_decode_cap(&self) -> u32 {
        self.q + 2 - 2 * self.d as u32
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedBlock {
    pub zero: bool,
    pub emax: i16,
    /// Length-prefixed plane groups, byte aligned.
    pub payload: Vec<u8>,
}

impl CompressedBlock {
    /// Size in bits including the zero flag and exponent.
    pub fn bit_len(&self) -> usize {
        if self.zero {
            1
        } else {
            17 + 8 * self.payload.len()
        }
    }

    pub fn write_to(&self, w: &mut BitWriter) {
        w.write_bit(self.zero);
        if self.zero {
            return;
        }
        w.write_bits(self.emax as u16 as u64, 16);
        for &b in &self.payload {
            w.write_bits(b as u64, 8);
        }
    }

    /// Reads one block; the group count follows from `beta`.
    pub fn read_from(r: &mut BitReader<'_>, params: &CodecParams) -> Result<Self> {
        let zero = r.read_bit()?;
        if zero {
            return Ok(Self { zero, emax: 0, payload: Vec::new() });
        }
        let emax = r.read_bits(16)? as u16 as i16;
        let mut payload = Vec::new();
        for _ in 0..params.beta.div_ceil(planes_per_group(params.d)) {
            let len = r.read_bits(8)? as u8;
            payload.push(len);
            for _ in 0..len {
                payload.push(r.read_bits(8)? as u8);
            }
        }
        Ok(Self { zero, emax, payload })
    }
}

fn perm_for(d: usize) -> &'static [usize] {
    use std::sync::OnceLock;
    static PERMS: [OnceLock<Vec<usize>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    PERMS[d - 1].get_or_init(|| sequency_order(d).expect("valid dimension"))
}

fn plane_bits(coeffs: &[u64], bit: u32) -> u64 {
    coeffs.iter().enumerate().fold(0u64, |acc, (i, c)| acc | (((c >> bit) & 1) << i))
}

/// Group-testing code for one plane. `n` counts coefficients already known
/// to be significant; their bits are sent verbatim.
fn encode_plane(w: &mut BitWriter, mut x: u64, n: &mut usize, size: usize) {
    w.write_bits(x, *n as u32);
    x = if *n >= 64 { 0 } else { x >> *n };
    while *n < size {
        w.write_bit(x != 0);
        if x == 0 {
            break;
        }
        while *n < size - 1 {
            let b = x & 1 == 1;
            w.write_bit(b);
            if b {
                break;
            }
            x >>= 1;
            *n += 1;
        }
        x >>= 1;
        *n += 1;
    }
}

fn decode_plane(r: &mut BitReader<'_>, n: &mut usize, size: usize) -> Result<u64> {
    let mut x = r.read_bits(*n as u32)?;
    while *n < size {
        if !r.read_bit()? {
            break;
        }
        while *n < size - 1 && !r.read_bit()? {
            *n += 1;
        }
        x |= 1 << *n;
        *n += 1;
    }
    Ok(x)
}

/// Negabinary coefficients in sequency order for a nonzero block.
fn coefficients(bf: &mut BlockFloat, params: &CodecParams) -> Result<Vec<u64>> {
    forward_transform(&mut bf.ints, params.d, params.q)?;
    let width = params.plane_count();
    let mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    // For widths below 64 the wrapping 64-bit code agrees with the
    // narrower code on its low `width` bits.
    Ok(perm_for(params.d).iter().map(|&i| nb_encode64(bf.ints[i]) & mask).collect())
}

/// Compresses one block of `4^d` finite values.
pub fn encode_block(values: &[f64], params: &CodecParams) -> Result<CompressedBlock> {
    if values.len() != params.block_len() {
        return Err(Error::Range(format!(
            "block has {} values, expected {}",
            values.len(),
            params.block_len()
        )));
    }
    let Some(mut bf) = block_float_encode(values, params.q)? else {
        return Ok(CompressedBlock { zero: true, emax: 0, payload: Vec::new() });
    };
    let emax = i16::try_from(bf.emax).map_err(|_| Error::Range(format!("emax {}", bf.emax)))?;
    let coeffs = coefficients(&mut bf, params)?;
    let size = coeffs.len();
    let width = params.plane_count();
    let mut payload = Vec::new();
    let mut n = 0usize;
    let mut plane = 0u32;
    while plane < params.beta {
        let end = (plane + planes_per_group(params.d)).min(params.beta);
        let mut g = BitWriter::new();
        let mut empty = n == 0;
        for k in plane..end {
            let x = plane_bits(&coeffs, width - 1 - k);
            empty &= x == 0;
            encode_plane(&mut g, x, &mut n, size);
        }
        if empty {
            payload.push(0);
        } else {
            g.pad_to_byte();
            let bytes = g.into_bytes();
            let len = u8::try_from(bytes.len())
                .map_err(|_| Error::Range("plane group longer than 255 bytes".into()))?;
            payload.push(len);
            payload.extend_from_slice(&bytes);
        }
        plane = end;
    }
    Ok(CompressedBlock { zero: false, emax, payload })
}

/// Restores the truncated negabinary coefficients (sequency order).
fn decode_planes(cb: &CompressedBlock, params: &CodecParams) -> Result<Vec<u64>> {
    let size = params.block_len();
    let width = params.plane_count();
    let mut coeffs = vec![0u64; size];
    let mut n = 0usize;
    let mut pos = 0usize;
    let mut plane = 0u32;
    while plane < params.beta {
        let end = (plane + planes_per_group(params.d)).min(params.beta);
        let len = *cb
            .payload
            .get(pos)
            .ok_or_else(|| Error::CorruptStream("missing plane group".into()))? as usize;
        pos += 1;
        if len == 0 {
            if n != 0 {
                return Err(Error::CorruptStream("empty group after significance".into()));
            }
            plane = end;
            continue;
        }
        let bytes = cb
            .payload
            .get(pos..pos + len)
            .ok_or_else(|| Error::CorruptStream("plane group truncated".into()))?;
        pos += len;
        let mut r = BitReader::new(bytes);
        for k in plane..end {
            let x = decode_plane(&mut r, &mut n, size)?;
            let bit = width - 1 - k;
            for (i, c) in coeffs.iter_mut().enumerate() {
                *c |= ((x >> i) & 1) << bit;
            }
        }
        if r.remaining() >= 8 {
            return Err(Error::CorruptStream("plane group has trailing bytes".into()));
        }
        plane = end;
    }
    if pos != cb.payload.len() {
        return Err(Error::CorruptStream("payload longer than beta planes".into()));
    }
    Ok(coeffs)
}

fn to_signed(u: u64, width: u32) -> i64 {
    let mask = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    let odd = 0xAAAA_AAAA_AAAA_AAAAu64 & mask;
    if width >= 64 {
        nb_decode64(u) as i64
    } else {
        (u ^ odd) as i64 - odd as i64
    }
}

/// Decompresses one block.
pub fn decode_block(cb: &CompressedBlock, params: &CodecParams) -> Result<Vec<f64>> {
    let size = params.block_len();
    if cb.zero {
        return Ok(vec![0.0; size]);
    }
    let coeffs = decode_planes(cb, params)?;
    let mut ints = vec![0i64; size];
    for (&i, &c) in perm_for(params.d).iter().zip(&coeffs) {
        ints[i] = to_signed(c, params.plane_count());
    }
    inverse_transform(&mut ints, params.d, params.q)
        .map_err(|e| Error::CorruptStream(e.to_string()))?;
    Ok(block_float_decode(&BlockFloat { emax: cb.emax as i32, ints, q: params.q }))
}

/// `decode(encode(x))` for one block.
pub fn round_trip_block(values: &[f64], params: &CodecParams) -> Result<Vec<f64>> {
    decode_block(&encode_block(values, params)?, params)
}

/// Truncated coefficients of a block in sequency order, exposed for tests
/// that inspect the plane representation directly.
pub fn truncated_coefficients(values: &[f64], params: &CodecParams) -> Result<Option<Vec<u64>>> {
    let cb = encode_block(values, params)?;
    if cb.zero {
        return Ok(None);
    }
    decode_planes(&cb, params).map(Some)
}

/// Inverse sequency permutation for `d`.
pub fn sequency_inverse(d: usize) -> Vec<usize> {
    invert(perm_for(d))
}
