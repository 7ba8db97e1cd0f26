//! Exact-length bit strings.
//!
//! Bits are stored most-significant-first inside each byte. Any bits past
//! `len_bits` in the final byte are kept at zero so that derived equality and
//! hashing stay canonical.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitsError {
    #[error("bit range {start}..{end} out of bounds for length {len}")]
    OutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid bit character {0:?}")]
    InvalidChar(char),
    #[error("invalid hex: {0}")]
    InvalidHex(String),
}

#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct BitString {
    bytes: Vec<u8>,
    len_bits: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len_bits: usize) -> Self {
        Self {
            bytes: vec![0; len_bits.div_ceil(8)],
            len_bits,
        }
    }

    pub fn ones(len_bits: usize) -> Self {
        let mut out = Self {
            bytes: vec![0xff; len_bits.div_ceil(8)],
            len_bits,
        };
        out.clear_tail();
        out
    }

    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Self {
        let bytes = bytes.into();
        let len_bits = bytes.len() * 8;
        Self { bytes, len_bits }
    }

    /// Builds a bit string from the first `len_bits` bits of `bytes`.
    pub fn from_bytes_truncated(mut bytes: Vec<u8>, len_bits: usize) -> Self {
        assert!(
            len_bits <= bytes.len() * 8,
            "not enough bytes for {len_bits} bits"
        );
        bytes.truncate(len_bits.div_ceil(8));
        let mut out = Self { bytes, len_bits };
        out.clear_tail();
        out
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::new();
        for bit in bits {
            out.push(bit);
        }
        out
    }

    /// Parses a string of `0`/`1` characters. Underscores and spaces are ignored.
    pub fn parse_binary(s: &str) -> Result<Self, BitsError> {
        let mut out = Self::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                '_' | ' ' => {}
                other => return Err(BitsError::InvalidChar(other)),
            }
        }
        Ok(out)
    }

    pub fn from_hex(s: &str) -> Result<Self, BitsError> {
        hex::decode(s)
            .map(Self::from_bytes)
            .map_err(|e| BitsError::InvalidHex(e.to_string()))
    }

    pub fn len_bits(&self) -> usize {
        self.len_bits
    }

    pub fn is_empty(&self) -> bool {
        self.len_bits == 0
    }

    pub fn is_byte_aligned(&self) -> bool {
        self.len_bits.is_multiple_of(8)
    }

    /// Underlying storage. The final byte is zero-padded when the length is
    /// not a multiple of eight.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.len_bits, "bit index {index} out of range");
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    pub fn set_bit(&mut self, index: usize, value: bool) {
        assert!(index < self.len_bits, "bit index {index} out of range");
        let mask = 0x80 >> (index % 8);
        if value {
            self.bytes[index / 8] |= mask;
        } else {
            self.bytes[index / 8] &= !mask;
        }
    }

    pub fn flip_bit(&mut self, index: usize) {
        let bit = self.bit(index);
        self.set_bit(index, !bit);
    }

    pub fn push(&mut self, bit: bool) {
        if self.len_bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len_bits += 1;
        self.set_bit(self.len_bits - 1, bit);
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len_bits).map(move |i| self.bit(i))
    }

    /// Copies the half-open bit range `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, BitsError> {
        if start > end || end > self.len_bits {
            return Err(BitsError::OutOfRange {
                start,
                end,
                len: self.len_bits,
            });
        }
        if start.is_multiple_of(8) {
            let bytes = self.bytes[start / 8..end.div_ceil(8)].to_vec();
            return Ok(Self::from_bytes_truncated(bytes, end - start));
        }
        Ok(Self::from_bits((start..end).map(|i| self.bit(i))))
    }

    pub fn append(&mut self, other: &BitString) {
        if self.is_byte_aligned() {
            self.bytes.extend_from_slice(&other.bytes);
            self.len_bits += other.len_bits;
        } else {
            for bit in other.iter() {
                self.push(bit);
            }
        }
    }

    pub fn concat<'a, I: IntoIterator<Item = &'a BitString>>(parts: I) -> Self {
        let mut out = Self::new();
        for part in parts {
            out.append(part);
        }
        out
    }

    /// Bitwise XOR of two equal-length strings; `None` if the lengths differ.
    pub fn xor(&self, other: &BitString) -> Option<Self> {
        if self.len_bits != other.len_bits {
            return None;
        }
        let bytes = self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| a ^ b)
            .collect();
        Some(Self {
            bytes,
            len_bits: self.len_bits,
        })
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn to_binary_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    fn clear_tail(&mut self) {
        let rem = self.len_bits % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len_bits <= 64 {
            write!(
                f,
                "BitString({}b:{})",
                self.len_bits,
                self.to_binary_string()
            )
        } else {
            write!(f, "BitString({}b:{}…)", self.len_bits, &self.to_hex()[..16])
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_byte_aligned() {
            f.write_str(&self.to_hex())
        } else {
            f.write_str(&self.to_binary_string())
        }
    }
}

impl From<&[u8]> for BitString {
    fn from(bytes: &[u8]) -> Self {
        Self::from_bytes(bytes.to_vec())
    }
}
