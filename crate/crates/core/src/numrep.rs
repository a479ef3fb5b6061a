//! Fixed-width integer representations used by the codec.
//!
//! Negabinary words carry bit `i` with weight `(-2)^i`. A plane set is the
//! transpose of a block's coefficient words: plane 0 holds the most
//! significant bit of every coefficient.

use crate::error::{Error, Result};

/// Widest word handled here; one plane of a 3-D block (64 coefficients)
/// fits a `u64` as well.
pub const MAX_WIDTH: u32 = 64;

const EVEN_BITS: u64 = 0x5555_5555_5555_5555;
const ODD_BITS: u64 = 0xAAAA_AAAA_AAAA_AAAA;

fn low_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn check_width(width: u32) -> Result<()> {
    if width == 0 || width > MAX_WIDTH {
        return Err(Error::Range(format!("word width {width} outside 1..={MAX_WIDTH}")));
    }
    Ok(())
}

/// Inclusive value range of a negabinary word of the given width.
pub fn negabinary_range(width: u32) -> (i128, i128) {
    let m = low_mask(width);
    (-((ODD_BITS & m) as i128), (EVEN_BITS & m) as i128)
}

/// A base −2 word of fixed width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NegaWord {
    bits: u64,
    width: u32,
}

impl NegaWord {
    /// Wraps a raw bit pattern; bits above `width` are rejected.
    pub fn from_bits(bits: u64, width: u32) -> Result<Self> {
        check_width(width)?;
        if bits & !low_mask(width) != 0 {
            return Err(Error::Range(format!("pattern {bits:#x} wider than {width} bits")));
        }
        Ok(Self { bits, width })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Bit `i`, weight `(-2)^i`.
    pub fn bit(&self, i: u32) -> bool {
        (self.bits >> i) & 1 == 1
    }
}

/// Encodes `v` in `width`-bit negabinary.
pub fn encode_negabinary(v: i128, width: u32) -> Result<NegaWord> {
    check_width(width)?;
    let (lo, hi) = negabinary_range(width);
    if v < lo || v > hi {
        return Err(Error::Range(format!(
            "{v} not representable in {width}-bit negabinary [{lo}, {hi}]"
        )));
    }
    // (v + 0b..1010) ^ 0b..1010 taken modulo 2^width.
    let m = low_mask(width);
    let mask = ODD_BITS & m;
    let bits = ((v as u64).wrapping_add(mask) ^ mask) & m;
    Ok(NegaWord { bits, width })
}

/// Value of a negabinary word.
pub fn decode_negabinary(w: NegaWord) -> i128 {
    let m = low_mask(w.width);
    let mask = ODD_BITS & m;
    (w.bits ^ mask) as i128 - mask as i128
}

/// A two's complement word of fixed width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwosWord {
    bits: u64,
    width: u32,
}

impl TwosWord {
    pub fn new(v: i64, width: u32) -> Result<Self> {
        check_width(width)?;
        let lo = -(1i128 << (width - 1));
        let hi = (1i128 << (width - 1)) - 1;
        if (v as i128) < lo || (v as i128) > hi {
            return Err(Error::Range(format!("{v} outside {width}-bit two's complement")));
        }
        Ok(Self { bits: v as u64 & low_mask(width), width })
    }

    pub fn from_bits(bits: u64, width: u32) -> Result<Self> {
        check_width(width)?;
        if bits & !low_mask(width) != 0 {
            return Err(Error::Range(format!("pattern {bits:#x} wider than {width} bits")));
        }
        Ok(Self { bits, width })
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Sign-extended value.
    pub fn value(&self) -> i64 {
        let shift = 64 - self.width;
        ((self.bits << shift) as i64) >> shift
    }
}

/// Converts a `p`-bit two's complement word to `p+1`-bit negabinary.
/// `p` may be at most 63.
pub fn twos_to_negabinary(w: TwosWord) -> Result<NegaWord> {
    encode_negabinary(w.value() as i128, w.width + 1)
}

/// Coefficients of one block transposed into bit planes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitPlaneSet {
    /// `planes[j]` bit `i` is bit `plane_width-1-j` of coefficient `i`.
    planes: Vec<u64>,
    coeff_count: usize,
    plane_width: u32,
}

impl BitPlaneSet {
    pub fn planes(&self) -> &[u64] {
        &self.planes
    }

    pub fn coeff_count(&self) -> usize {
        self.coeff_count
    }

    pub fn plane_width(&self) -> u32 {
        self.plane_width
    }

    /// Builds a set from planes given most significant first.
    pub fn from_planes(planes: Vec<u64>, coeff_count: usize) -> Result<Self> {
        if coeff_count == 0 || coeff_count > 64 {
            return Err(Error::Range(format!("coefficient count {coeff_count} outside 1..=64")));
        }
        let width = planes.len() as u32;
        check_width(width)?;
        let m = low_mask(coeff_count as u32);
        if planes.iter().any(|p| p & !m != 0) {
            return Err(Error::Range("plane has bits beyond coefficient count".into()));
        }
        Ok(Self { planes, coeff_count, plane_width: width })
    }

    /// Transposes back to coefficient words.
    pub fn to_coeffs(&self) -> Vec<NegaWord> {
        let w = self.plane_width;
        let mut out = vec![0u64; self.coeff_count];
        for (j, &plane) in self.planes.iter().enumerate() {
            let shift = w - 1 - j as u32;
            for (i, c) in out.iter_mut().enumerate() {
                *c |= ((plane >> i) & 1) << shift;
            }
        }
        out.into_iter().map(|bits| NegaWord { bits, width: w }).collect()
    }

    /// Keeps the `beta` most significant planes and zeroes the rest.
    pub fn truncate(&self, beta: u32) -> Result<Self> {
        if beta > self.plane_width {
            return Err(Error::Range(format!(
                "beta {beta} exceeds plane count {}",
                self.plane_width
            )));
        }
        let mut planes = self.planes.clone();
        for p in planes.iter_mut().skip(beta as usize) {
            *p = 0;
        }
        Ok(Self { planes, ..self.clone() })
    }
}

/// Transposes equal-width coefficient words into planes, most significant
/// plane first.
pub fn transpose_to_planes(coeffs: &[NegaWord]) -> Result<BitPlaneSet> {
    let Some(first) = coeffs.first() else {
        return Err(Error::Range("empty coefficient list".into()));
    };
    if coeffs.len() > 64 {
        return Err(Error::Range(format!("{} coefficients exceed 64", coeffs.len())));
    }
    let w = first.width;
    if coeffs.iter().any(|c| c.width != w) {
        return Err(Error::Range("coefficients differ in width".into()));
    }
    let planes = (0..w)
        .map(|j| {
            let bit = w - 1 - j;
            coeffs
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, c)| acc | (((c.bits >> bit) & 1) << i))
        })
        .collect();
    Ok(BitPlaneSet { planes, coeff_count: coeffs.len(), plane_width: w })
}

/// Shorthand for `truncate_planes(p, beta) = p.truncate(beta)`.
pub fn truncate_planes(p: &BitPlaneSet, beta: u32) -> Result<BitPlaneSet> {
    p.truncate(beta)
}

/// Wrapping negabinary encoding of a 64-bit word, used on the codec's hot
/// path where the range is already guaranteed.
#[inline]
pub(crate) fn nb_encode64(v: i64) -> u64 {
    (v as u64).wrapping_add(ODD_BITS) ^ ODD_BITS
}

#[inline]
pub(crate) fn nb_decode64(u: u64) -> i128 {
    (u ^ ODD_BITS) as i128 - ODD_BITS as i128
}
