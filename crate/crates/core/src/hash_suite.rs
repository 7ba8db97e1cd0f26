//! Hash functions, SHAKE expansion, one-time-pad encryption and the security
//! strength table for the supported NIST algorithms.
//!
//! The primitives come from the RustCrypto `sha2`/`sha3` crates; this module
//! only constrains how they are called. SHA-1 is deliberately absent.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::Digest;
use sha3::digest::{ExtendableOutput, Update, XofReader};
use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("{0} is an extendable-output function and needs an explicit output length")]
    MissingOutputLength(HashAlgorithmId),
    #[error("{0} has a fixed output length")]
    NotExtendable(HashAlgorithmId),
    #[error("output length must be positive")]
    ZeroOutputLength,
    #[error("hash input must be byte aligned, got {0} bits")]
    UnalignedInput(usize),
    #[error("one-time pad key is {key} bits but payload is {payload} bits")]
    LengthMismatch { key: usize, payload: usize },
    #[error("unknown hash algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("unknown hash algorithm wire id {0}")]
    UnknownWireId(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HashAlgorithmId {
    #[serde(rename = "sha2-224")]
    Sha2_224,
    #[serde(rename = "sha2-256")]
    Sha2_256,
    #[serde(rename = "sha2-384")]
    Sha2_384,
    #[serde(rename = "sha2-512")]
    Sha2_512,
    #[serde(rename = "sha3-224")]
    Sha3_224,
    #[serde(rename = "sha3-256")]
    Sha3_256,
    #[serde(rename = "sha3-384")]
    Sha3_384,
    #[serde(rename = "sha3-512")]
    Sha3_512,
    #[serde(rename = "shake-128")]
    Shake128,
    #[serde(rename = "shake-256")]
    Shake256,
}

impl HashAlgorithmId {
    pub const ALL: [HashAlgorithmId; 10] = [
        Self::Sha2_224,
        Self::Sha2_256,
        Self::Sha2_384,
        Self::Sha2_512,
        Self::Sha3_224,
        Self::Sha3_256,
        Self::Sha3_384,
        Self::Sha3_512,
        Self::Shake128,
        Self::Shake256,
    ];

    /// Digest size of the fixed-output variants; `None` for SHAKE.
    pub fn digest_bits(self) -> Option<u32> {
        use HashAlgorithmId::*;
        match self {
            Sha2_224 | Sha3_224 => Some(224),
            Sha2_256 | Sha3_256 => Some(256),
            Sha2_384 | Sha3_384 => Some(384),
            Sha2_512 | Sha3_512 => Some(512),
            Shake128 | Shake256 => None,
        }
    }

    pub fn is_xof(self) -> bool {
        matches!(self, Self::Shake128 | Self::Shake256)
    }

    pub fn is_sha2(self) -> bool {
        matches!(
            self,
            Self::Sha2_224 | Self::Sha2_256 | Self::Sha2_384 | Self::Sha2_512
        )
    }

    /// Internal compression block size in bits.
    pub fn input_block_bits(self) -> u32 {
        use HashAlgorithmId::*;
        match self {
            Sha2_224 | Sha2_256 => 512,
            Sha2_384 | Sha2_512 => 1024,
            Sha3_224 => 1152,
            Sha3_256 => 1088,
            Sha3_384 => 832,
            Sha3_512 => 576,
            Shake128 => 1344,
            Shake256 => 1088,
        }
    }

    pub fn name(self) -> &'static str {
        use HashAlgorithmId::*;
        match self {
            Sha2_224 => "sha2-224",
            Sha2_256 => "sha2-256",
            Sha2_384 => "sha2-384",
            Sha2_512 => "sha2-512",
            Sha3_224 => "sha3-224",
            Sha3_256 => "sha3-256",
            Sha3_384 => "sha3-384",
            Sha3_512 => "sha3-512",
            Shake128 => "shake-128",
            Shake256 => "shake-256",
        }
    }

    pub fn wire_id(self) -> u8 {
        Self::ALL.iter().position(|a| *a == self).unwrap() as u8 + 1
    }

    pub fn from_wire_id(id: u8) -> Result<Self, HashError> {
        (id as usize)
            .checked_sub(1)
            .and_then(|i| Self::ALL.get(i).copied())
            .ok_or(HashError::UnknownWireId(id))
    }
}

impl fmt::Display for HashAlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HashAlgorithmId {
    type Err = HashError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect();
        let alg = match normalized.as_str() {
            "sha2224" | "sha224" => Self::Sha2_224,
            "sha2256" | "sha256" => Self::Sha2_256,
            "sha2384" | "sha384" => Self::Sha2_384,
            "sha2512" | "sha512" => Self::Sha2_512,
            "sha3224" => Self::Sha3_224,
            "sha3256" => Self::Sha3_256,
            "sha3384" => Self::Sha3_384,
            "sha3512" => Self::Sha3_512,
            "shake128" => Self::Shake128,
            "shake256" => Self::Shake256,
            _ => return Err(HashError::UnknownAlgorithm(s.to_string())),
        };
        Ok(alg)
    }
}

/// An algorithm together with the output length it is used at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashFunction {
    alg: HashAlgorithmId,
    output_bits: u32,
}

impl HashFunction {
    /// `output_bits` is required for SHAKE and must be absent or equal to the
    /// digest size otherwise.
    pub fn new(alg: HashAlgorithmId, output_bits: Option<u32>) -> Result<Self, HashError> {
        match (alg.digest_bits(), output_bits) {
            (Some(d), None) => Ok(Self {
                alg,
                output_bits: d,
            }),
            (Some(d), Some(o)) if o == d => Ok(Self {
                alg,
                output_bits: d,
            }),
            (Some(_), Some(_)) => Err(HashError::NotExtendable(alg)),
            (None, None) => Err(HashError::MissingOutputLength(alg)),
            (None, Some(0)) => Err(HashError::ZeroOutputLength),
            (None, Some(o)) => Ok(Self {
                alg,
                output_bits: o,
            }),
        }
    }

    pub fn fixed(alg: HashAlgorithmId) -> Result<Self, HashError> {
        Self::new(alg, None)
    }

    pub fn xof(alg: HashAlgorithmId, output_bits: u32) -> Result<Self, HashError> {
        if !alg.is_xof() {
            return Err(HashError::NotExtendable(alg));
        }
        Self::new(alg, Some(output_bits))
    }

    pub fn alg(&self) -> HashAlgorithmId {
        self.alg
    }

    pub fn output_bits(&self) -> u32 {
        self.output_bits
    }

    /// δ for SHAKE, `None` for fixed-output algorithms.
    pub fn delta_bits(&self) -> Option<u32> {
        self.alg.is_xof().then_some(self.output_bits)
    }

    pub fn hash(&self, data: &BitString) -> Result<BitString, HashError> {
        if self.alg.is_xof() {
            xof_expand(self.alg, data, self.output_bits as usize)
        } else {
            digest(self.alg, data)
        }
    }

    /// Byte-level fast path; the output is truncated to `output_bits`.
    pub fn hash_bytes(&self, data: &[u8]) -> BitString {
        let bytes = match self.alg.digest_bits() {
            Some(_) => fixed_digest_bytes(self.alg, data),
            None => xof_bytes(self.alg, data, (self.output_bits as usize).div_ceil(8)),
        };
        BitString::from_bytes_truncated(bytes, self.output_bits as usize)
    }

    pub fn strength(&self) -> StrengthTriple {
        strength_lookup(self)
    }
}

impl fmt::Display for HashFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.delta_bits() {
            Some(d) => write!(f, "{}(δ={})", self.alg, d),
            None => write!(f, "{}", self.alg),
        }
    }
}

fn fixed_digest_bytes(alg: HashAlgorithmId, data: &[u8]) -> Vec<u8> {
    use HashAlgorithmId::*;
    match alg {
        Sha2_224 => sha2::Sha224::digest(data).to_vec(),
        Sha2_256 => sha2::Sha256::digest(data).to_vec(),
        Sha2_384 => sha2::Sha384::digest(data).to_vec(),
        Sha2_512 => sha2::Sha512::digest(data).to_vec(),
        Sha3_224 => sha3::Sha3_224::digest(data).to_vec(),
        Sha3_256 => sha3::Sha3_256::digest(data).to_vec(),
        Sha3_384 => sha3::Sha3_384::digest(data).to_vec(),
        Sha3_512 => sha3::Sha3_512::digest(data).to_vec(),
        Shake128 | Shake256 => unreachable!("xof routed through xof_bytes"),
    }
}

fn xof_bytes(alg: HashAlgorithmId, data: &[u8], out_len: usize) -> Vec<u8> {
    let mut out = vec![0u8; out_len];
    match alg {
        HashAlgorithmId::Shake128 => {
            let mut h = sha3::Shake128::default();
            h.update(data);
            h.finalize_xof().read(&mut out);
        }
        HashAlgorithmId::Shake256 => {
            let mut h = sha3::Shake256::default();
            h.update(data);
            h.finalize_xof().read(&mut out);
        }
        _ => unreachable!("fixed-output algorithm routed through fixed_digest_bytes"),
    }
    out
}

pub fn digest(alg: HashAlgorithmId, data: &BitString) -> Result<BitString, HashError> {
    if alg.is_xof() {
        return Err(HashError::MissingOutputLength(alg));
    }
    if !data.is_byte_aligned() {
        return Err(HashError::UnalignedInput(data.len_bits()));
    }
    Ok(BitString::from_bytes(fixed_digest_bytes(
        alg,
        data.as_bytes(),
    )))
}

/// SHAKE output of exactly `delta_bits` bits. Shorter outputs are prefixes of
/// longer ones for the same input.
pub fn xof_expand(
    alg: HashAlgorithmId,
    data: &BitString,
    delta_bits: usize,
) -> Result<BitString, HashError> {
    if !alg.is_xof() {
        return Err(HashError::NotExtendable(alg));
    }
    if delta_bits == 0 {
        return Err(HashError::ZeroOutputLength);
    }
    if !data.is_byte_aligned() {
        return Err(HashError::UnalignedInput(data.len_bits()));
    }
    let bytes = xof_bytes(alg, data.as_bytes(), delta_bits.div_ceil(8));
    Ok(BitString::from_bytes_truncated(bytes, delta_bits))
}

pub fn otp_encrypt(key: &BitString, payload: &BitString) -> Result<BitString, HashError> {
    key.xor(payload).ok_or(HashError::LengthMismatch {
        key: key.len_bits(),
        payload: payload.len_bits(),
    })
}

/// Inclusive range of bits, used for second-preimage entries that depend on
/// the message length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitRange {
    pub lower: u32,
    pub upper: u32,
}

impl BitRange {
    pub const fn exact(bits: u32) -> Self {
        Self {
            lower: bits,
            upper: bits,
        }
    }

    pub const fn new(lower: u32, upper: u32) -> Self {
        Self { lower, upper }
    }
}

impl fmt::Display for BitRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lower == self.upper {
            write!(f, "{}", self.lower)
        } else {
            write!(f, "{}-{}", self.lower, self.upper)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrengthTriple {
    pub collision_bits: u32,
    pub preimage_bits: u32,
    /// SHAKE preimage entries are lower bounds (`≥ min(δ, c)`).
    pub preimage_is_lower_bound: bool,
    pub second_preimage_bits: BitRange,
}

impl StrengthTriple {
    /// The weakest of the three resistances.
    pub fn overall_bits(&self) -> u32 {
        self.collision_bits
            .min(self.preimage_bits)
            .min(self.second_preimage_bits.lower)
    }
}

const fn fixed_row(cr: u32, pr: u32, spr: BitRange) -> StrengthTriple {
    StrengthTriple {
        collision_bits: cr,
        preimage_bits: pr,
        preimage_is_lower_bound: false,
        second_preimage_bits: spr,
    }
}

/// Strength of `func` in bits. SHAKE rows depend on the configured δ.
pub fn strength_lookup(func: &HashFunction) -> StrengthTriple {
    use HashAlgorithmId::*;
    match func.alg() {
        Sha2_224 => fixed_row(112, 224, BitRange::new(201, 224)),
        Sha2_256 => fixed_row(128, 256, BitRange::new(201, 256)),
        Sha2_384 => fixed_row(192, 384, BitRange::exact(384)),
        Sha2_512 => fixed_row(256, 512, BitRange::new(394, 512)),
        Sha3_224 => fixed_row(112, 224, BitRange::exact(224)),
        Sha3_256 => fixed_row(128, 256, BitRange::exact(256)),
        Sha3_384 => fixed_row(192, 384, BitRange::exact(384)),
        Sha3_512 => fixed_row(256, 512, BitRange::exact(512)),
        Shake128 => shake_row(func.output_bits(), 128),
        Shake256 => shake_row(func.output_bits(), 256),
    }
}

fn shake_row(delta: u32, capacity_strength: u32) -> StrengthTriple {
    StrengthTriple {
        collision_bits: (delta / 2).min(capacity_strength),
        preimage_bits: delta.min(capacity_strength),
        preimage_is_lower_bound: true,
        second_preimage_bits: BitRange::exact(delta.min(capacity_strength)),
    }
}
