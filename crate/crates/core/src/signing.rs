//! Messaging-phase core: combined keys, signature generation, partial
//! candidates and threshold verification.
//!
//! Signing computes `h = H(m)`, encrypts it with the combined key
//! `k_1 || k_2` as a one-time pad and hashes each of the `2n` ciphertext
//! blocks separately. A verifier repeats the pipeline with the blocks it knows
//! and compares block by block.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::distribution::{
    BlockLabel, BlockPartition, CombinedLabel, DistributionError, ExchangedBlockSet, KeyHalf,
    KeyId, KeyStore, KnowledgeMask,
};
use crate::hash_suite::HashFunction;

#[derive(Debug, Error)]
pub enum SigningError {
    #[error("signing needs every block of the combined key; {unknown} are unknown")]
    PartialKey { unknown: usize },
    #[error("key {0} has already been used for a signature")]
    KeyConsumed(KeyId),
    #[error("length constraint violated: {0}")]
    LengthConstraintViolated(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("signatures were produced under different hash suites")]
    SuiteMismatch,
    #[error("received signature is missing {0} block digests")]
    IncompleteSignature(usize),
    #[error("invalid verification threshold: {0}")]
    InvalidThreshold(String),
    #[error(transparent)]
    Store(DistributionError),
}

/// Message hash, block hash and key geometry. Construction enforces
/// `d = 2l` and byte-aligned blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HashSuiteConfig {
    message_hash: HashFunction,
    block_hash: HashFunction,
    n_blocks_per_key: usize,
    key_length_bits: usize,
}

impl HashSuiteConfig {
    pub fn new(
        message_hash: HashFunction,
        block_hash: HashFunction,
        n_blocks_per_key: usize,
        key_length_bits: usize,
    ) -> Result<Self, SigningError> {
        let violated = |m: String| Err(SigningError::LengthConstraintViolated(m));
        let d = message_hash.output_bits() as usize;
        if n_blocks_per_key < 2 || !n_blocks_per_key.is_multiple_of(2) {
            return violated(format!(
                "block count n={n_blocks_per_key} must be even and at least 2"
            ));
        }
        if d != 2 * key_length_bits {
            return violated(format!(
                "message digest is {d} bits but the combined key is 2l = {} bits",
                2 * key_length_bits
            ));
        }
        if !key_length_bits.is_multiple_of(n_blocks_per_key) {
            return violated(format!(
                "n={n_blocks_per_key} does not divide l={key_length_bits}"
            ));
        }
        let block = key_length_bits / n_blocks_per_key;
        if !block.is_multiple_of(8) {
            return violated(format!(
                "block length l/n = {block} bits is not byte aligned"
            ));
        }
        if !block_hash.output_bits().is_multiple_of(8) {
            return violated(format!(
                "block digest of {} bits is not byte aligned",
                block_hash.output_bits()
            ));
        }
        Ok(Self {
            message_hash,
            block_hash,
            n_blocks_per_key,
            key_length_bits,
        })
    }

    pub fn message_hash(&self) -> HashFunction {
        self.message_hash
    }

    pub fn block_hash(&self) -> HashFunction {
        self.block_hash
    }

    pub fn n_blocks_per_key(&self) -> usize {
        self.n_blocks_per_key
    }

    pub fn key_length_bits(&self) -> usize {
        self.key_length_bits
    }

    /// `d`, equal to `2l`.
    pub fn digest_bits(&self) -> usize {
        self.message_hash.output_bits() as usize
    }

    pub fn block_len_bits(&self) -> usize {
        self.key_length_bits / self.n_blocks_per_key
    }

    pub fn block_digest_bits(&self) -> usize {
        self.block_hash.output_bits() as usize
    }

    pub fn total_blocks(&self) -> usize {
        2 * self.n_blocks_per_key
    }

    pub fn signature_bits(&self) -> usize {
        self.total_blocks() * self.block_digest_bits()
    }
}

/// One key's blocks as held by one party; unknown blocks are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyShare {
    pub source_key_id: KeyId,
    pub block_len_bits: usize,
    pub blocks: Vec<Option<BitString>>,
}

impl KeyShare {
    pub fn full(partition: &BlockPartition) -> Self {
        Self {
            source_key_id: partition.source_key_id.clone(),
            block_len_bits: partition.block_len_bits,
            blocks: partition.blocks().iter().cloned().map(Some).collect(),
        }
    }

    pub fn from_exchange(set: &ExchangedBlockSet) -> Self {
        let mut blocks = vec![None; set.n_blocks];
        for (label, bits) in &set.entries {
            blocks[label.index()] = Some(bits.clone());
        }
        Self {
            source_key_id: set.source_key_id.clone(),
            block_len_bits: set.block_len_bits,
            blocks,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// `k_1 || k_2` with per-block knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedKey {
    n_per_key: usize,
    block_len_bits: usize,
    blocks: Vec<Option<BitString>>,
    source_ids: [KeyId; 2],
}

pub fn combine_keys(first: &KeyShare, second: &KeyShare) -> Result<CombinedKey, SigningError> {
    if first.n_blocks() != second.n_blocks() || first.block_len_bits != second.block_len_bits {
        return Err(SigningError::ShapeMismatch(format!(
            "{}x{} bits vs {}x{} bits",
            first.n_blocks(),
            first.block_len_bits,
            second.n_blocks(),
            second.block_len_bits
        )));
    }
    let all = first.blocks.iter().chain(&second.blocks);
    if let Some(bad) = all
        .clone()
        .flatten()
        .find(|b| b.len_bits() != first.block_len_bits)
    {
        return Err(SigningError::ShapeMismatch(format!(
            "block of {} bits in a {}-bit geometry",
            bad.len_bits(),
            first.block_len_bits
        )));
    }
    Ok(CombinedKey {
        n_per_key: first.n_blocks(),
        block_len_bits: first.block_len_bits,
        blocks: all.cloned().collect(),
        source_ids: [first.source_key_id.clone(), second.source_key_id.clone()],
    })
}

impl CombinedKey {
    pub fn n_per_key(&self) -> usize {
        self.n_per_key
    }

    pub fn block_len_bits(&self) -> usize {
        self.block_len_bits
    }

    pub fn total_bits(&self) -> usize {
        self.blocks.len() * self.block_len_bits
    }

    pub fn source_ids(&self) -> &[KeyId; 2] {
        &self.source_ids
    }

    pub fn mask(&self) -> KnowledgeMask {
        KnowledgeMask::from_flags(
            self.n_per_key,
            self.blocks.iter().map(Option::is_some).collect(),
        )
    }

    pub fn block(&self, label: CombinedLabel) -> Option<&BitString> {
        self.blocks[label.position(self.n_per_key)].as_ref()
    }

    /// Overwrites one block. Used by adversarial parties that substitute key
    /// material; the new bits must keep the block length.
    pub fn replace_block(&mut self, label: CombinedLabel, bits: BitString) {
        assert_eq!(
            bits.len_bits(),
            self.block_len_bits,
            "replacement block has wrong length"
        );
        self.blocks[label.position(self.n_per_key)] = Some(bits);
    }

    pub fn blocks(&self) -> &[Option<BitString>] {
        &self.blocks
    }

    /// Full key bits when every block is known.
    pub fn bits(&self) -> Option<BitString> {
        let blocks: Option<Vec<&BitString>> = self.blocks.iter().map(Option::as_ref).collect();
        blocks.map(BitString::concat)
    }

    pub fn second_half_labels(&self) -> impl Iterator<Item = CombinedLabel> {
        (0..self.n_per_key).map(|i| CombinedLabel {
            half: KeyHalf::Second,
            label: BlockLabel::from_index(i),
        })
    }
}

/// The `2n` per-block digests. Entries are `None` where the holder lacked the
/// key block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBundle {
    suite: HashSuiteConfig,
    digests: Vec<Option<BitString>>,
}

impl SignatureBundle {
    /// A complete bundle from raw digests; lengths are checked against `suite`.
    pub fn from_digests(
        suite: HashSuiteConfig,
        digests: Vec<BitString>,
    ) -> Result<Self, SigningError> {
        if digests.len() != suite.total_blocks() {
            return Err(SigningError::ShapeMismatch(format!(
                "{} digests for {} blocks",
                digests.len(),
                suite.total_blocks()
            )));
        }
        if let Some(d) = digests
            .iter()
            .find(|d| d.len_bits() != suite.block_digest_bits())
        {
            return Err(SigningError::ShapeMismatch(format!(
                "digest of {} bits, expected {}",
                d.len_bits(),
                suite.block_digest_bits()
            )));
        }
        Ok(Self {
            suite,
            digests: digests.into_iter().map(Some).collect(),
        })
    }

    pub fn suite(&self) -> &HashSuiteConfig {
        &self.suite
    }

    pub fn entries(&self) -> &[Option<BitString>] {
        &self.digests
    }

    pub fn entries_mut(&mut self) -> &mut [Option<BitString>] {
        &mut self.digests
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    pub fn block_digest_bits(&self) -> usize {
        self.suite.block_digest_bits()
    }

    pub fn absent_count(&self) -> usize {
        self.digests.iter().filter(|d| d.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.absent_count() == 0
    }

    /// Total size of the present digests.
    pub fn total_bits(&self) -> usize {
        self.digests.iter().flatten().map(BitString::len_bits).sum()
    }
}

fn check_geometry(key: &CombinedKey, suite: &HashSuiteConfig) -> Result<(), SigningError> {
    if key.n_per_key != suite.n_blocks_per_key() || key.block_len_bits != suite.block_len_bits() {
        return Err(SigningError::LengthConstraintViolated(format!(
            "combined key is 2x{}x{} bits but the suite expects 2x{}x{}",
            key.n_per_key,
            key.block_len_bits,
            suite.n_blocks_per_key(),
            suite.block_len_bits()
        )));
    }
    Ok(())
}

/// Hash, pad and per-block hash. Block `p` of the ciphertext only depends on
/// block `p` of the key, so unknown key blocks simply yield absent digests.
fn block_digests(
    message: &[u8],
    key: &CombinedKey,
    suite: &HashSuiteConfig,
) -> Vec<Option<BitString>> {
    let h = suite.message_hash().hash_bytes(message);
    // Blocks are whole bytes by construction of the suite.
    let b = suite.block_len_bits() / 8;
    let mut c = vec![0u8; b];
    let block_hash = suite.block_hash();
    key.blocks
        .iter()
        .enumerate()
        .map(|(p, key_block)| {
            key_block.as_ref().map(|k| {
                let h_block = &h.as_bytes()[p * b..(p + 1) * b];
                for ((c, k), h) in c.iter_mut().zip(k.as_bytes()).zip(h_block) {
                    *c = k ^ h;
                }
                block_hash.hash_bytes(&c)
            })
        })
        .collect()
}

/// Signs with a fully known combined key and marks both source keys consumed
/// in `store`.
pub fn sign(
    message: &[u8],
    key: &CombinedKey,
    suite: &HashSuiteConfig,
    store: &KeyStore,
) -> Result<SignatureBundle, SigningError> {
    let unknown = key.blocks.iter().filter(|b| b.is_none()).count();
    if unknown > 0 {
        return Err(SigningError::PartialKey { unknown });
    }
    check_geometry(key, suite)?;
    let [first, second] = &key.source_ids;
    store.consume_all(&[first, second]).map_err(|e| match e {
        DistributionError::KeyConsumed(id) => SigningError::KeyConsumed(id),
        other => SigningError::Store(other),
    })?;
    Ok(SignatureBundle {
        suite: *suite,
        digests: block_digests(message, key, suite),
    })
}

/// The verifier's side of the pipeline; works with any knowledge level.
pub fn compute_candidate(
    message: &[u8],
    key: &CombinedKey,
    suite: &HashSuiteConfig,
) -> Result<SignatureBundle, SigningError> {
    check_geometry(key, suite)?;
    Ok(SignatureBundle {
        suite: *suite,
        digests: block_digests(message, key, suite),
    })
}

/// Maximum tolerated fraction of mismatching known blocks, as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VerificationThreshold {
    numer: u32,
    denom: u32,
}

impl VerificationThreshold {
    pub const ZERO: VerificationThreshold = VerificationThreshold { numer: 0, denom: 1 };

    pub fn new(numer: u32, denom: u32) -> Result<Self, SigningError> {
        if denom == 0 || numer > denom {
            return Err(SigningError::InvalidThreshold(format!(
                "{numer}/{denom} is not in [0, 1]"
            )));
        }
        Ok(Self { numer, denom })
    }

    pub fn from_percent(percent: u32) -> Result<Self, SigningError> {
        Self::new(percent, 100)
    }

    pub fn numer(&self) -> u32 {
        self.numer
    }

    pub fn denom(&self) -> u32 {
        self.denom
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.numer) / f64::from(self.denom)
    }

    /// `floor(fraction × known)`.
    pub fn allowed_mismatches(&self, known: usize) -> usize {
        (known as u64 * u64::from(self.numer) / u64::from(self.denom)) as usize
    }
}

impl Default for VerificationThreshold {
    fn default() -> Self {
        Self::ZERO
    }
}

impl fmt::Display for VerificationThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl FromStr for VerificationThreshold {
    type Err = SigningError;

    /// Accepts `0.25`, `25%` or `1/4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let invalid = || SigningError::InvalidThreshold(s.to_string());
        if let Some(pct) = s.strip_suffix('%') {
            let (n, d) = parse_decimal(pct.trim()).ok_or_else(invalid)?;
            return Self::new(n, d.checked_mul(100).ok_or_else(invalid)?);
        }
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| invalid())?;
            let d = d.trim().parse().map_err(|_| invalid())?;
            return Self::new(n, d);
        }
        let (n, d) = parse_decimal(s).ok_or_else(invalid)?;
        Self::new(n, d)
    }
}

/// `"0.25"` → `(25, 100)`.
fn parse_decimal(s: &str) -> Option<(u32, u32)> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 6 {
        return None;
    }
    let denom = 10u32.pow(frac.len() as u32);
    let int: u32 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac: u32 = if frac.is_empty() {
        0
    } else {
        frac.parse().ok()?
    };
    Some((int.checked_mul(denom)?.checked_add(frac)?, denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub matches: usize,
    pub mismatches: usize,
    pub unknowns: usize,
    pub threshold: VerificationThreshold,
    pub allowed_mismatches: usize,
    pub verdict: Verdict,
    pub mismatched_labels: Vec<CombinedLabel>,
}

impl VerificationReport {
    pub fn known(&self) -> usize {
        self.matches + self.mismatches
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

/// Compares a received signature against a locally computed candidate.
/// Absent candidate entries are unknowns and never count either way.
pub fn verify(
    received: &SignatureBundle,
    candidate: &SignatureBundle,
    threshold: VerificationThreshold,
) -> Result<VerificationReport, SigningError> {
    if received.suite != candidate.suite || received.len() != candidate.len() {
        return Err(SigningError::SuiteMismatch);
    }
    if !received.is_complete() {
        return Err(SigningError::IncompleteSignature(received.absent_count()));
    }
    let n = received.suite.n_blocks_per_key();
    let (mut matches, mut unknowns) = (0, 0);
    let mut mismatched_labels = Vec::new();
    for (p, (got, want)) in received.digests.iter().zip(&candidate.digests).enumerate() {
        match want {
            None => unknowns += 1,
            Some(w) if Some(w) == got.as_ref() => matches += 1,
            Some(_) => mismatched_labels.push(CombinedLabel::from_position(p, n)),
        }
    }
    let mismatches = mismatched_labels.len();
    let allowed_mismatches = threshold.allowed_mismatches(matches + mismatches);
    let verdict = if mismatches <= allowed_mismatches {
        Verdict::Accepted
    } else {
        Verdict::Rejected
    };
    Ok(VerificationReport {
        matches,
        mismatches,
        unknowns,
        threshold,
        allowed_mismatches,
        verdict,
        mismatched_labels,
    })
}
