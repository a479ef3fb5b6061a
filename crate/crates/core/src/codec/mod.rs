//! Fixed-precision block codec.
//!
//! Compression runs, per `4^d` block: common-exponent quantization,
//! the integer decorrelating transform, total-sequency reordering,
//! negabinary conversion, bit-plane transposition and group-testing
//! coding of the `beta` most significant planes. Decompression inverts each
//! step; discarded planes read as zero.

mod array;
pub mod bitstream;
mod block;
mod blockfloat;
mod order;
mod transform;

pub use array::{
    compress_array, compression_ratio, decompress_array, partition, reassemble, CompressedArray,
    HEADER_BYTES, MAGIC, VERSION,
};
pub use block::{
    decode_block, encode_block, round_trip_block, sequency_inverse, truncated_coefficients,
    CodecParams, CompressedBlock, planes_per_group,
};
pub use blockfloat::{block_float_decode, block_float_encode, frexp_exp, ldexp, BlockFloat};
pub use order::sequency_order;
pub use transform::{forward_transform, inverse_transform, FORWARD_16, INVERSE_4};

use crate::error::Result;

/// `decode(encode(x))` for a whole row-major array, plus the compression ratio.
pub fn round_trip_array(data: &[f64], dims: &[usize], params: &CodecParams) -> Result<(Vec<f64>, f64)> {
    let ca = compress_array(data, dims, params)?;
    Ok((decompress_array(&ca)?, compression_ratio(&ca, 64)))
}
