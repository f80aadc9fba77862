//! Bit strings and the Elias delta code for positive integers.
//!
//! The delta code writes the bit width of `k` in gamma form, then the bits
//! of `k` below its leading one. Decoding is self-terminating, so codes
//! concatenate without separators.

use crate::error::{Error, Result};
use std::fmt;

/// Growable bit string in transmission order: index 0 is sent first and
/// packs into the most significant bit of the first byte.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitVec {
    bits: Vec<bool>,
}

impl BitVec {
    pub fn new() -> Self {
        BitVec::default()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).copied()
    }

    pub fn extend_from(&mut self, other: &BitVec) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Packs most-significant-bit-first, zero-padded to a byte boundary.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &bit) in self.bits.iter().enumerate() {
            if bit {
                out[i / 8] |= 1 << (7 - i % 8);
            }
        }
        out
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &bit in &self.bits {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of bits in `k`'s binary expansion; 0 for 0.
fn bit_width(k: u64) -> u32 {
    64 - k.leading_zeros()
}

/// Code length of `elias_encode(k)` in bits, without building the string.
pub fn elias_length(k: u64) -> usize {
    let width = bit_width(k).max(1);
    let prefix = bit_width(width as u64);
    (width + 2 * prefix - 2) as usize
}

/// Elias delta code of a positive integer.
pub fn elias_encode(k: u64) -> Result<BitVec> {
    if k == 0 {
        return Err(Error::domain("the integer code starts at 1"));
    }
    let width = bit_width(k);
    let prefix = bit_width(width as u64);
    let mut out = BitVec::new();
    for _ in 0..prefix - 1 {
        out.push(false);
    }
    for shift in (0..prefix).rev() {
        out.push(width >> shift & 1 == 1);
    }
    for shift in (0..width - 1).rev() {
        out.push(k >> shift & 1 == 1);
    }
    Ok(out)
}

/// Decodes one delta codeword starting at `start`; returns the integer and
/// the number of bits consumed.
pub fn elias_decode_from(bits: &BitVec, start: usize) -> Result<(u64, usize)> {
    let mut pos = start;
    let mut zeros = 0u32;
    loop {
        match bits.get(pos) {
            Some(false) => {
                zeros += 1;
                pos += 1;
                // The width field of a u64 value needs at most 7 bits.
                if zeros > 6 {
                    return Err(Error::Format(
                        "zero run too long for a 64-bit integer code".into(),
                    ));
                }
            }
            Some(true) => break,
            None => return Err(Error::Format("bit string ended inside the prefix".into())),
        }
    }
    let mut width = 0u64;
    for _ in 0..zeros + 1 {
        let bit = bits
            .get(pos)
            .ok_or_else(|| Error::Format("bit string ended inside the width field".into()))?;
        width = width << 1 | bit as u64;
        pos += 1;
    }
    if width == 0 || width > 64 {
        return Err(Error::Format(format!("decoded width {width} out of range")));
    }
    let mut value = 1u64;
    for _ in 0..width - 1 {
        let bit = bits
            .get(pos)
            .ok_or_else(|| Error::Format("bit string ended inside the value field".into()))?;
        value = value << 1 | bit as u64;
        pos += 1;
    }
    Ok((value, pos - start))
}

/// Decodes one delta codeword from the front of the string.
pub fn elias_decode(bits: &BitVec) -> Result<(u64, usize)> {
    elias_decode_from(bits, 0)
}
