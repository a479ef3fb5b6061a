//! Arrays of independently coded blocks.

use rayon::prelude::*;

use super::bitstream::{BitReader, BitWriter};
use super::block::{decode_block, encode_block, CodecParams, CompressedBlock};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ZFPI";
pub const VERSION: u8 = 1;
/// Header bytes: magic, version, d, beta, q, three extents.
pub const HEADER_BYTES: usize = 4 + 1 + 1 + 2 + 2 + 24;

fn check_dims(dims: &[usize]) -> Result<()> {
    if !(1..=3).contains(&dims.len()) {
        return Err(Error::Dimension(dims.len()));
    }
    if dims.iter().any(|&n| n == 0) {
        return Err(Error::Range(format!("empty extent in {dims:?}")));
    }
    Ok(())
}

fn block_grid(dims: &[usize]) -> Vec<usize> {
    dims.iter().map(|n| n.div_ceil(4)).collect()
}

/// Row-major strides, last axis contiguous.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

/// Block origin for block number `b` in row-major block order.
fn block_origin(grid: &[usize], mut b: usize) -> Vec<usize> {
    let mut o = vec![0; grid.len()];
    for a in (0..grid.len()).rev() {
        o[a] = (b % grid[a]) * 4;
        b /= grid[a];
    }
    o
}

/// Visits every block-local position with its clamped global flat index.
fn for_each_cell(dims: &[usize], origin: &[usize], mut f: impl FnMut(usize, usize, bool)) {
    let d = dims.len();
    let st = strides(dims);
    for local in 0..4usize.pow(d as u32) {
        let mut rem = local;
        let mut flat = 0;
        let mut inside = true;
        for a in (0..d).rev() {
            let g = origin[a] + rem % 4;
            rem /= 4;
            inside &= g < dims[a];
            flat += g.min(dims[a] - 1) * st[a];
        }
        f(local, flat, inside);
    }
}

/// Splits a row-major array into `4^d` blocks, padding by edge replication.
pub fn partition(data: &[f64], dims: &[usize]) -> Result<Vec<Vec<f64>>> {
    check_dims(dims)?;
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::Range(format!("{} values for extents {dims:?}", data.len())));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let grid = block_grid(dims);
    let nblocks: usize = grid.iter().product();
    Ok((0..nblocks)
        .map(|b| {
            let origin = block_origin(&grid, b);
            let mut blk = vec![0.0; 4usize.pow(dims.len() as u32)];
            for_each_cell(dims, &origin, |local, flat, _| blk[local] = data[flat]);
            blk
        })
        .collect())
}

/// Inverse of [`partition`]; padded cells are dropped.
pub fn reassemble(blocks: &[Vec<f64>], dims: &[usize]) -> Result<Vec<f64>> {
    check_dims(dims)?;
    let grid = block_grid(dims);
    if blocks.len() != grid.iter().product::<usize>() {
        return Err(Error::Range(format!("{} blocks for extents {dims:?}", blocks.len())));
    }
    let mut out = vec![0.0; dims.iter().product()];
    for (b, blk) in blocks.iter().enumerate() {
        let origin = block_origin(&grid, b);
        for_each_cell(dims, &origin, |local, flat, inside| {
            if inside {
                out[flat] = blk[local];
            }
        });
    }
    Ok(out)
}

/// A compressed array with per-block random access.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompressedArray {
    dims: Vec<usize>,
    params: CodecParams,
    blocks: Vec<CompressedBlock>,
}

impl CompressedArray {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &CodecParams {
        &self.params
    }

    pub fn blocks(&self) -> &[CompressedBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total size in bits: header plus every block.
    pub fn bit_len(&self) -> usize {
        8 * HEADER_BYTES + self.blocks.iter().map(CompressedBlock::bit_len).sum::<usize>()
    }

    fn locate(&self, index: &[usize]) -> Result<(usize, usize)> {
        if index.len() != self.dims.len() || index.iter().zip(&self.dims).any(|(i, n)| i >= n) {
            return Err(Error::Index(index.to_vec(), self.dims.clone()));
        }
        let grid = block_grid(&self.dims);
        let (mut block, mut local) = (0, 0);
        for a in 0..index.len() {
            block = block * grid[a] + index[a] / 4;
            local = local * 4 + index[a] % 4;
        }
        Ok((block, local))
    }

    /// Reads one element, decoding only its block.
    pub fn get(&self, index: &[usize]) -> Result<f64> {
        let (b, l) = self.locate(index)?;
        Ok(decode_block(&self.blocks[b], &self.params)?[l])
    }

    /// Writes one element: decode its block, modify, re-encode.
    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(0));
        }
        let (b, l) = self.locate(index)?;
        let mut blk = decode_block(&self.blocks[b], &self.params)?;
        blk[l] = value;
        self.blocks[b] = encode_block(&blk, &self.params)?;
        Ok(())
    }

    /// Serializes header and blocks into the documented byte stream.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_BYTES + self.bit_len() / 8);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.params.d as u8);
        out.extend_from_slice(&(self.params.beta as u16).to_le_bytes());
        out.extend_from_slice(&(self.params.q as u16).to_le_bytes());
        for a in 0..3 {
            let n = self.dims.get(a).copied().unwrap_or(1) as u64;
            out.extend_from_slice(&n.to_le_bytes());
        }
        let mut w = BitWriter::new();
        for b in &self.blocks {
            b.write_to(&mut w);
        }
        out.extend_from_slice(&w.into_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_BYTES || &bytes[..4] != MAGIC {
            return Err(Error::CorruptStream("missing ZFPI header".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::CorruptStream(format!("unsupported version {}", bytes[4])));
        }
        let d = bytes[5] as usize;
        let beta = u16::from_le_bytes([bytes[6], bytes[7]]) as u32;
        let q = u16::from_le_bytes([bytes[8], bytes[9]]) as u32;
        let params = CodecParams::new(d, q, beta).map_err(|e| Error::CorruptStream(e.to_string()))?;
        let mut dims = Vec::with_capacity(d);
        for a in 0..3 {
            let o = 10 + 8 * a;
            let n = u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes")) as usize;
            if a < d {
                dims.push(n);
            } else if n != 1 {
                return Err(Error::CorruptStream(format!("extent {a} = {n} beyond d = {d}")));
            }
        }
        check_dims(&dims).map_err(|e| Error::CorruptStream(e.to_string()))?;
        let nblocks: usize = block_grid(&dims).iter().product();
        let mut r = BitReader::new(&bytes[HEADER_BYTES..]);
        let blocks = (0..nblocks)
            .map(|_| CompressedBlock::read_from(&mut r, &params))
            .collect::<Result<Vec<_>>>()?;
        if r.remaining() >= 8 {
            return Err(Error::CorruptStream("trailing bytes after last block".into()));
        }
        Ok(Self { dims, params, blocks })
    }
}

/// Compresses a row-major array; blocks are coded in parallel.
pub fn compress_array(data: &[f64], dims: &[usize], params: &CodecParams) -> Result<CompressedArray> {
    if dims.len() != params.d {
        return Err(Error::Dimension(dims.len()));
    }
    let blocks = partition(data, dims)?
        .par_iter()
        .map(|b| encode_block(b, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompressedArray { dims: dims.to_vec(), params: *params, blocks })
}

pub fn decompress_array(ca: &CompressedArray) -> Result<Vec<f64>> {
    let blocks = ca
        .blocks
        .par_iter()
        .map(|b| decode_block(b, &ca.params))
        .collect::<Result<Vec<_>>>()?;
    reassemble(&blocks, &ca.dims)
}

/// Uncompressed bits over compressed bits, headers included.
pub fn compression_ratio(ca: &CompressedArray, source_bits_per_value: u32) -> f64 {
    (ca.len() as f64 * source_bits_per_value as f64) / ca.bit_len() as f64
}
