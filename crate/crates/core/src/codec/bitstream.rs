//! Bit-granular writer and reader. Bits are packed least significant first
//! within each byte.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    nbits: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len_bits(&self) -> usize {
        self.nbits
    }

    pub fn write_bit(&mut self, bit: bool) {
        let byte = self.nbits / 8;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 1 << (self.nbits % 8);
        }
        self.nbits += 1;
    }

    /// Writes the low `n` bits of `value`, least significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        for i in 0..n {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    /// Appends every bit of another writer.
    pub fn append(&mut self, other: &BitWriter) {
        if self.nbits % 8 == 0 {
            self.bytes.truncate(self.nbits / 8);
            self.bytes.extend_from_slice(&other.bytes);
            self.nbits += other.nbits;
            return;
        }
        for i in 0..other.nbits {
            self.write_bit((other.bytes[i / 8] >> (i % 8)) & 1 == 1);
        }
    }

    pub fn pad_to_byte(&mut self) {
        while self.nbits % 8 != 0 {
            self.write_bit(false);
        }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0, end: bytes.len() * 8 }
    }

    /// Reader limited to the first `nbits` bits of `bytes`.
    pub fn with_len(bytes: &'a [u8], nbits: usize) -> Self {
        Self { bytes, pos: 0, end: nbits.min(bytes.len() * 8) }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.end - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.end {
            return Err(Error::CorruptStream(format!("read past end at bit {}", self.pos)));
        }
        let b = (self.bytes[self.pos / 8] >> (self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(b)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for i in 0..n {
            if self.read_bit()? {
                v |= 1 << i;
            }
        }
        Ok(v)
    }
}
