//! Binary encoding of the `(m, S_a)` tuple.
//!
//! ```text
//! offset size field
//!      0    4 magic "QDS1"
//!      4    1 version (1)
//!      5    1 message-hash algorithm id
//!      6    1 block-hash algorithm id
//!      7    1 reserved (0)
//!      8    4 message-hash δ in bits (0 for fixed-output hashes)
//!     12    4 l, key length in bits
//!     16    4 n, blocks per key
//!     20    4 block digest length in bits
//!     24    8 message length in bytes
//!     32    . message
//!      .    . 2n block digests in label order
//! ```
//!
//! All integers are big-endian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::hash_suite::{HashAlgorithmId, HashFunction};
use crate::signing::{HashSuiteConfig, SignatureBundle};

pub const MAGIC: &[u8; 4] = b"QDS1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("payload truncated: needed {needed} bytes, {available} available")]
    TruncatedPayload { needed: u64, available: u64 },
    #[error("inconsistent lengths: {0}")]
    InconsistentLengths(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
}

/// A message together with its complete signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedTuple {
    message: Vec<u8>,
    signature: SignatureBundle,
}

impl SignedTuple {
    /// The bundle must have every digest present.
    pub fn new(message: Vec<u8>, signature: SignatureBundle) -> Option<Self> {
        signature
            .is_complete()
            .then_some(Self { message, signature })
    }

    pub fn message(&self) -> &[u8] {
        &self.message
    }

    pub fn signature(&self) -> &SignatureBundle {
        &self.signature
    }

    pub fn suite(&self) -> &HashSuiteConfig {
        self.signature.suite()
    }

    pub fn with_message(mut self, message: Vec<u8>) -> Self {
        self.message = message;
        self
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.message.len() + self.signature.total_bits() / 8
    }
}

pub fn encode_tuple(tuple: &SignedTuple) -> Vec<u8> {
    let suite = tuple.suite();
    let mut out = Vec::with_capacity(tuple.encoded_len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(suite.message_hash().alg().wire_id());
    out.push(suite.block_hash().alg().wire_id());
    out.push(0);
    out.extend_from_slice(&suite.message_hash().delta_bits().unwrap_or(0).to_be_bytes());
    out.extend_from_slice(&(suite.key_length_bits() as u32).to_be_bytes());
    out.extend_from_slice(&(suite.n_blocks_per_key() as u32).to_be_bytes());
    out.extend_from_slice(&(suite.block_digest_bits() as u32).to_be_bytes());
    out.extend_from_slice(&(tuple.message.len() as u64).to_be_bytes());
    out.extend_from_slice(&tuple.message);
    for digest in tuple.signature.entries().iter().flatten() {
        out.extend_from_slice(digest.as_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: u64) -> Result<&'a [u8], WireError> {
        if len > self.remaining() as u64 {
            return Err(WireError::TruncatedPayload {
                needed: len,
                available: self.remaining() as u64,
            });
        }
        let out = &self.buf[self.pos..self.pos + len as usize];
        self.pos += len as usize;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn hash_from_header(id: u8, bits: u32, what: &str) -> Result<HashFunction, WireError> {
    let alg = HashAlgorithmId::from_wire_id(id)
        .map_err(|_| WireError::MalformedHeader(format!("unknown {what} algorithm id {id}")))?;
    let delta = if alg.is_xof() {
        Some(bits)
    } else {
        match (what, bits) {
            ("message-hash", 0) => None,
            (_, b) if Some(b) == alg.digest_bits() => None,
            _ => {
                return Err(WireError::InconsistentLengths(format!(
                    "{alg} declared with {bits} output bits"
                )))
            }
        }
    };
    HashFunction::new(alg, delta).map_err(|e| WireError::InconsistentLengths(e.to_string()))
}

/// Parses and validates a tuple. Never reads past the declared lengths and
/// never returns a partially decoded value.
pub fn decode_tuple(bytes: &[u8]) -> Result<SignedTuple, WireError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| WireError::BadMagic)? != MAGIC {
        return Err(WireError::BadMagic);
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let msg_alg = r.u8()?;
    let blk_alg = r.u8()?;
    if r.u8()? != 0 {
        return Err(WireError::MalformedHeader(
            "reserved byte is not zero".into(),
        ));
    }
    let delta_msg = r.u32()?;
    let l = r.u32()?;
    let n = r.u32()?;
    let digest_bits = r.u32()?;
    let msg_len = r.u64()?;

    let message_hash = hash_from_header(msg_alg, delta_msg, "message-hash")?;
    let block_hash = hash_from_header(blk_alg, digest_bits, "block-hash")?;
    let suite = HashSuiteConfig::new(message_hash, block_hash, n as usize, l as usize)
        .map_err(|e| WireError::InconsistentLengths(e.to_string()))?;

    let message = r.take(msg_len)?.to_vec();

    let digest_bytes = u64::from(digest_bits / 8);
    let expected = 2 * u64::from(n) * digest_bytes;
    let available = r.remaining() as u64;
    if available != expected {
        if available < expected && !available.is_multiple_of(digest_bytes) {
            return Err(WireError::TruncatedPayload {
                needed: expected,
                available,
            });
        }
        return Err(WireError::InconsistentLengths(format!(
            "header declares n={n} ({} digests of {digest_bytes} bytes) but {available} bytes follow",
            2 * u64::from(n)
        )));
    }
    let digests = (0..2 * n)
        .map(|_| {
            r.take(digest_bytes)
                .map(|d| BitString::from_bytes(d.to_vec()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let signature = SignatureBundle::from_digests(suite, digests)
        .map_err(|e| WireError::InconsistentLengths(e.to_string()))?;
    Ok(SignedTuple { message, signature })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suite() -> HashSuiteConfig {
        HashSuiteConfig::new(
            HashFunction::xof(HashAlgorithmId::Shake256, 128).unwrap(),
            HashFunction::fixed(HashAlgorithmId::Sha2_256).unwrap(),
            4,
            64,
        )
        .unwrap()
    }

    fn tuple(message: &[u8]) -> SignedTuple {
        let digests = (0..8)
            .map(|i| BitString::from_bytes(vec![i as u8; 32]))
            .collect();
        SignedTuple::new(
            message.to_vec(),
            SignatureBundle::from_digests(suite(), digests).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_tuple(&tuple(b"abc"));
        assert_eq!(&bytes[..4], b"QDS1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], HashAlgorithmId::Shake256.wire_id());
        assert_eq!(bytes[6], HashAlgorithmId::Sha2_256.wire_id());
        assert_eq!(bytes[7], 0);
        assert_eq!(&bytes[8..12], &128u32.to_be_bytes());
        assert_eq!(&bytes[12..16], &64u32.to_be_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_be_bytes());
        assert_eq!(&bytes[20..24], &256u32.to_be_bytes());
        assert_eq!(&bytes[24..32], &3u64.to_be_bytes());
        assert_eq!(&bytes[32..35], b"abc");
        assert_eq!(bytes.len(), HEADER_LEN + 3 + 8 * 32);
        assert_eq!(bytes.len(), tuple(b"abc").encoded_len());
    }

    #[test]
    fn decode_errors() {
        let good = encode_tuple(&tuple(b"hello"));
        assert_eq!(decode_tuple(&good).unwrap(), tuple(b"hello"));

        let mut bad = good.clone();
        bad[0] = b'X';
        assert_eq!(decode_tuple(&bad), Err(WireError::BadMagic));
        assert_eq!(decode_tuple(b"QD"), Err(WireError::BadMagic));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_tuple(&bad), Err(WireError::UnsupportedVersion(2)));

        assert!(matches!(
            decode_tuple(&good[..20]),
            Err(WireError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode_tuple(&good[..34]),
            Err(WireError::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode_tuple(&good[..good.len() - 5]),
            Err(WireError::TruncatedPayload { .. })
        ));

        // One whole digest missing.
        assert!(matches!(
            decode_tuple(&good[..good.len() - 32]),
            Err(WireError::InconsistentLengths(_))
        ));
        let mut extra = good.clone();
        extra.extend_from_slice(&[0; 32]);
        assert!(matches!(
            decode_tuple(&extra),
            Err(WireError::InconsistentLengths(_))
        ));

        let mut bad = good.clone();
        bad[7] = 1;
        assert!(matches!(
            decode_tuple(&bad),
            Err(WireError::MalformedHeader(_))
        ));
        let mut bad = good.clone();
        bad[6] = 42;
        assert!(matches!(
            decode_tuple(&bad),
            Err(WireError::MalformedHeader(_))
        ));
        // l no longer matches d/2.
        let mut bad = good.clone();
        bad[12..16].copy_from_slice(&32u32.to_be_bytes());
        assert!(matches!(
            decode_tuple(&bad),
            Err(WireError::InconsistentLengths(_))
        ));
    }

    #[test]
    fn huge_declared_message_is_truncation_not_allocation() {
        let mut bad = encode_tuple(&tuple(b""));
        bad[24..32].copy_from_slice(&u64::MAX.to_be_bytes());
        assert!(matches!(
            decode_tuple(&bad),
            Err(WireError::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn incomplete_bundles_are_not_tuples() {
        let mut sig = tuple(b"").signature().clone();
        sig.entries_mut()[3] = None;
        assert!(SignedTuple::new(vec![], sig).is_none());
    }
}
