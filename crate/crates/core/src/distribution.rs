//! Distribution phase: QKD key delivery (simulated), optional SHAKE
//! expansion, block partitioning, random permutations and the partial block
//! exchange between the two verifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::hash_suite::{self, HashAlgorithmId, HashError};
use crate::role::Role;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("key length must be a positive multiple of 8 bits, got {0}")]
    InvalidKeyLength(usize),
    #[error("{link} delivered {first}/{second}-bit keys, expected {expected}")]
    DeliveryLength {
        link: LinkId,
        expected: usize,
        first: usize,
        second: usize,
    },
    #[error("{n} blocks do not evenly divide a {len}-bit key")]
    NonDivisibleLength { len: usize, n: usize },
    #[error("block count must be even and at least 2, got {0}")]
    InvalidBlockCount(usize),
    #[error("expansion length {delta} is shorter than the {len}-bit key")]
    ExpansionTooShort { len: usize, delta: usize },
    #[error("expansion length must be byte aligned, got {0}")]
    UnalignedExpansion(usize),
    #[error("permutation over {perm} elements applied to {blocks} blocks")]
    DimensionMismatch { perm: usize, blocks: usize },
    #[error("mapping is not a permutation of 1..={0}")]
    NotAPermutation(usize),
    #[error("exchanged block set is malformed: {0}")]
    MalformedExchange(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error("key {0} is not in the store")]
    UnknownKey(KeyId),
    #[error("key {0} is already in the store")]
    DuplicateKey(KeyId),
    #[error("key {0} has already been consumed")]
    KeyConsumed(KeyId),
    #[error("key store file: {0}")]
    Io(#[from] std::io::Error),
    #[error("key store format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkId {
    #[serde(rename = "alice-bob")]
    AliceBob,
    #[serde(rename = "alice-charlie")]
    AliceCharlie,
    #[serde(rename = "bob-charlie")]
    BobCharlie,
}

impl LinkId {
    pub fn endpoints(self) -> (Role, Role) {
        match self {
            LinkId::AliceBob => (Role::Signer, Role::Verifier1),
            LinkId::AliceCharlie => (Role::Signer, Role::Verifier2),
            LinkId::BobCharlie => (Role::Verifier1, Role::Verifier2),
        }
    }

    fn stream_index(self) -> u64 {
        match self {
            LinkId::AliceBob => 1,
            LinkId::AliceCharlie => 2,
            LinkId::BobCharlie => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkId::AliceBob => "alice-bob",
            LinkId::AliceCharlie => "alice-charlie",
            LinkId::BobCharlie => "bob-charlie",
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LinkId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alice-bob" | "ab" => Ok(LinkId::AliceBob),
            "alice-charlie" | "ac" => Ok(LinkId::AliceCharlie),
            "bob-charlie" | "bc" => Ok(LinkId::BobCharlie),
            _ => Err(format!("unknown link {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyId(pub String);

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for KeyId {
    fn from(s: &str) -> Self {
        KeyId(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QkdKey {
    pub key_id: KeyId,
    pub link: LinkId,
    pub bits: BitString,
}

impl QkdKey {
    pub fn length_bits(&self) -> usize {
        self.bits.len_bits()
    }
}

/// The same key as seen by both ends of a link.
#[derive(Debug, Clone)]
pub struct LinkDelivery {
    pub first: QkdKey,
    pub second: QkdKey,
}

/// Anything able to hand out shared symmetric keys for a link. The simulator
/// implements it with a seeded generator; a hardware key-delivery client
/// could implement it as well.
pub trait KeySource {
    fn deliver(&mut self, link: LinkId, l_bits: usize) -> Result<LinkDelivery, DistributionError>;
}

/// Draws `l_bits` uniform bits from `rng`.
pub fn simulate_qkd_link<R: RngCore + ?Sized>(
    rng: &mut R,
    l_bits: usize,
    link: LinkId,
    key_id: KeyId,
) -> Result<QkdKey, DistributionError> {
    if l_bits == 0 || !l_bits.is_multiple_of(8) {
        return Err(DistributionError::InvalidKeyLength(l_bits));
    }
    let mut bytes = vec![0u8; l_bits / 8];
    rng.fill_bytes(&mut bytes);
    Ok(QkdKey {
        key_id,
        link,
        bits: BitString::from_bytes(bytes),
    })
}

/// Seeded stand-in for QKD hardware. Every link gets its own ChaCha20 stream
/// so keys on different links are independent.
#[derive(Debug, Clone)]
pub struct SimulatedQkd {
    seed: u64,
    issued: BTreeMap<LinkId, u32>,
}

impl SimulatedQkd {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            issued: BTreeMap::new(),
        }
    }
}

impl KeySource for SimulatedQkd {
    fn deliver(&mut self, link: LinkId, l_bits: usize) -> Result<LinkDelivery, DistributionError> {
        let counter = self.issued.entry(link).or_insert(0);
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream((link.stream_index() << 32) | u64::from(*counter));
        let key_id = KeyId(format!("{}-{:016x}-{}", link, self.seed, *counter));
        let key = simulate_qkd_link(&mut rng, l_bits, link, key_id)?;
        *counter += 1;
        Ok(LinkDelivery {
            first: key.clone(),
            second: key,
        })
    }
}

/// Stretches `key` to `delta_bits` with SHAKE. The result carries a new id;
/// the original should be retired from any store it sits in.
pub fn expand_key_xof(
    key: &QkdKey,
    alg: HashAlgorithmId,
    delta_bits: usize,
) -> Result<QkdKey, DistributionError> {
    if delta_bits < key.length_bits() {
        return Err(DistributionError::ExpansionTooShort {
            len: key.length_bits(),
            delta: delta_bits,
        });
    }
    if !delta_bits.is_multiple_of(8) {
        return Err(DistributionError::UnalignedExpansion(delta_bits));
    }
    let bits = hash_suite::xof_expand(alg, &key.bits, delta_bits)?;
    Ok(QkdKey {
        key_id: KeyId(format!("{}+{}x{}", key.key_id, alg, delta_bits)),
        link: key.link,
        bits,
    })
}

/// 1-based block label (`B1..Bn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockLabel(pub u32);

impl BlockLabel {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        BlockLabel(index as u32 + 1)
    }
}

impl fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub source_key_id: KeyId,
    pub block_len_bits: usize,
    blocks: Vec<BitString>,
}

impl BlockPartition {
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[BitString] {
        &self.blocks
    }

    pub fn block(&self, label: BlockLabel) -> &BitString {
        &self.blocks[label.index()]
    }

    pub fn block_mut(&mut self, label: BlockLabel) -> &mut BitString {
        &mut self.blocks[label.index()]
    }

    pub fn labels(&self) -> impl Iterator<Item = BlockLabel> {
        (0..self.blocks.len()).map(BlockLabel::from_index)
    }

    pub fn join(&self) -> BitString {
        BitString::concat(&self.blocks)
    }
}

/// Splits `key` into `n` consecutive blocks of `l/n` bits, labelled in order.
pub fn partition(key: &QkdKey, n: usize) -> Result<BlockPartition, DistributionError> {
    let len = key.length_bits();
    if n == 0 || !len.is_multiple_of(n) {
        return Err(DistributionError::NonDivisibleLength { len, n });
    }
    let block_len_bits = len / n;
    let blocks = (0..n)
        .map(|i| key.bits.slice(i * block_len_bits, (i + 1) * block_len_bits))
        .collect::<Result<Vec<_>, _>>()
        .expect("block ranges lie inside the key");
    Ok(BlockPartition {
        source_key_id: key.key_id.clone(),
        block_len_bits,
        blocks,
    })
}

/// A bijection on `1..=n`, stored as the image row `(a_1, ..., a_n)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    mapping: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (1..=n as u32).collect(),
        }
    }

    pub fn from_mapping(mapping: Vec<u32>) -> Result<Self, DistributionError> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &a in &mapping {
            let i = (a as usize).wrapping_sub(1);
            if i >= n || seen[i] {
                return Err(DistributionError::NotAPermutation(n));
            }
            seen[i] = true;
        }
        Ok(Self { mapping })
    }

    pub fn n(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[u32] {
        &self.mapping
    }

    /// `γ(i) = a_i` for 1-based `i`.
    pub fn apply(&self, i: u32) -> u32 {
        self.mapping[i as usize - 1]
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.mapping.len()];
        for (i, &a) in self.mapping.iter().enumerate() {
            inv[a as usize - 1] = i as u32 + 1;
        }
        Self { mapping: inv }
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Self {
        assert_eq!(
            self.n(),
            other.n(),
            "composing permutations of different size"
        );
        Self {
            mapping: other.mapping.iter().map(|&i| self.apply(i)).collect(),
        }
    }
}

/// Uniform permutation of `n` elements (Fisher–Yates). `n` must be even.
pub fn random_permutation<R: RngCore + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<Permutation, DistributionError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(DistributionError::InvalidBlockCount(n));
    }
    let mut mapping: Vec<u32> = (1..=n as u32).collect();
    mapping.shuffle(rng);
    Ok(Permutation { mapping })
}

/// The `n/2` labelled blocks one verifier reveals to the other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangedBlockSet {
    pub source_key_id: KeyId,
    pub n_blocks: usize,
    pub block_len_bits: usize,
    pub entries: BTreeMap<BlockLabel, BitString>,
}

impl ExchangedBlockSet {
    pub fn count(&self) -> usize {
        self.entries.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = BlockLabel> + '_ {
        self.entries.keys().copied()
    }

    /// Compact binary form used on the verifier-to-verifier link: key id
    /// length (u16) and bytes, `n` (u32), block bits (u32), entry count
    /// (u32), then each label (u32) with its block bytes. Big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let id = self.source_key_id.0.as_bytes();
        let block_bytes = self.block_len_bits.div_ceil(8);
        let mut out = Vec::with_capacity(14 + id.len() + self.count() * (4 + block_bytes));
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&(self.n_blocks as u32).to_be_bytes());
        out.extend_from_slice(&(self.block_len_bits as u32).to_be_bytes());
        out.extend_from_slice(&(self.count() as u32).to_be_bytes());
        for (label, bits) in &self.entries {
            out.extend_from_slice(&label.0.to_be_bytes());
            out.extend_from_slice(bits.as_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DistributionError> {
        let truncated = || DistributionError::MalformedExchange("truncated payload".into());
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8], DistributionError> {
            let out = bytes
                .get(pos..pos.checked_add(len).ok_or_else(truncated)?)
                .ok_or_else(truncated)?;
            pos += len;
            Ok(out)
        };
        let id_len = u16::from_be_bytes(take(2)?.try_into().unwrap()) as usize;
        let id = String::from_utf8(take(id_len)?.to_vec())
            .map_err(|_| DistributionError::MalformedExchange("key id is not UTF-8".into()))?;
        let n_blocks = u32::from_be_bytes(take(4)?.try_into().unwrap()) as usize;
        let block_len_bits = u32::from_be_bytes(take(4)?.try_into().unwrap()) as usize;
        let count = u32::from_be_bytes(take(4)?.try_into().unwrap()) as usize;
        if count > n_blocks {
            return Err(DistributionError::MalformedExchange(format!(
                "{count} entries for {n_blocks} blocks"
            )));
        }
        let block_bytes = block_len_bits.div_ceil(8);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let label = BlockLabel(u32::from_be_bytes(take(4)?.try_into().unwrap()));
            let bits = BitString::from_bytes_truncated(take(block_bytes)?.to_vec(), block_len_bits);
            if entries.insert(label, bits).is_some() {
                return Err(DistributionError::MalformedExchange(format!(
                    "duplicate label {label}"
                )));
            }
        }
        if pos != bytes.len() {
            return Err(DistributionError::MalformedExchange(format!(
                "{} trailing bytes",
                bytes.len() - pos
            )));
        }
        let set = Self {
            source_key_id: KeyId(id),
            n_blocks,
            block_len_bits,
            entries,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let bad = |msg: String| Err(DistributionError::MalformedExchange(msg));
        if self.n_blocks < 2 || !self.n_blocks.is_multiple_of(2) {
            return bad(format!("block count {} is not even", self.n_blocks));
        }
        if self.count() != self.n_blocks / 2 {
            return bad(format!(
                "{} entries, expected {}",
                self.count(),
                self.n_blocks / 2
            ));
        }
        for (label, bits) in &self.entries {
            if label.0 == 0 || label.0 as usize > self.n_blocks {
                return bad(format!("label {label} outside B1..B{}", self.n_blocks));
            }
            if bits.len_bits() != self.block_len_bits {
                return bad(format!("block {label} has {} bits", bits.len_bits()));
            }
        }
        Ok(())
    }
}

/// Picks the blocks labelled `γ(1), ..., γ(n/2)`.
pub fn select_exchange_blocks(
    partition: &BlockPartition,
    perm: &Permutation,
) -> Result<ExchangedBlockSet, DistributionError> {
    let n = partition.n_blocks();
    if perm.n() != n {
        return Err(DistributionError::DimensionMismatch {
            perm: perm.n(),
            blocks: n,
        });
    }
    if n < 2 || !n.is_multiple_of(2) {
        return Err(DistributionError::InvalidBlockCount(n));
    }
    let entries = (1..=(n / 2) as u32)
        .map(|i| {
            let label = BlockLabel(perm.apply(i));
            (label, partition.block(label).clone())
        })
        .collect();
    Ok(ExchangedBlockSet {
        source_key_id: partition.source_key_id.clone(),
        n_blocks: n,
        block_len_bits: partition.block_len_bits,
        entries,
    })
}

/// Which half of the combined key `k_1 || k_2` a label lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyHalf {
    First,
    Second,
}

/// A label in the combined key; ordered `k_1`'s `B1..Bn` then `k_2`'s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CombinedLabel {
    pub half: KeyHalf,
    pub label: BlockLabel,
}

impl CombinedLabel {
    pub fn position(self, n_per_key: usize) -> usize {
        match self.half {
            KeyHalf::First => self.label.index(),
            KeyHalf::Second => n_per_key + self.label.index(),
        }
    }

    pub fn from_position(position: usize, n_per_key: usize) -> Self {
        if position < n_per_key {
            CombinedLabel {
                half: KeyHalf::First,
                label: BlockLabel::from_index(position),
            }
        } else {
            CombinedLabel {
                half: KeyHalf::Second,
                label: BlockLabel::from_index(position - n_per_key),
            }
        }
    }
}

impl fmt::Display for CombinedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = match self.half {
            KeyHalf::First => "k1",
            KeyHalf::Second => "k2",
        };
        write!(f, "{key}.{}", self.label)
    }
}

/// Known/unknown flag for each of the `2n` combined-key labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeMask {
    n_per_key: usize,
    known: Vec<bool>,
}

impl KnowledgeMask {
    pub fn all_known(n_per_key: usize) -> Self {
        Self {
            n_per_key,
            known: vec![true; 2 * n_per_key],
        }
    }

    pub fn from_flags(n_per_key: usize, known: Vec<bool>) -> Self {
        assert_eq!(known.len(), 2 * n_per_key, "mask needs 2n flags");
        Self { n_per_key, known }
    }

    /// One half fully known, the other known only at `partial` labels.
    fn one_full_half(n: usize, full: KeyHalf, partial: impl Iterator<Item = BlockLabel>) -> Self {
        let mut known = vec![false; 2 * n];
        let (full_range, offset) = match full {
            KeyHalf::First => (0..n, n),
            KeyHalf::Second => (n..2 * n, 0),
        };
        known[full_range].iter_mut().for_each(|k| *k = true);
        for label in partial {
            known[offset + label.index()] = true;
        }
        Self {
            n_per_key: n,
            known,
        }
    }

    pub fn n_per_key(&self) -> usize {
        self.n_per_key
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn is_known(&self, label: CombinedLabel) -> bool {
        self.known[label.position(self.n_per_key)]
    }

    pub fn is_known_at(&self, position: usize) -> bool {
        self.known[position]
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|k| **k).count()
    }

    pub fn is_all_known(&self) -> bool {
        self.known.iter().all(|k| *k)
    }

    pub fn unknown_labels(&self) -> Vec<CombinedLabel> {
        (0..self.known.len())
            .filter(|&p| !self.known[p])
            .map(|p| CombinedLabel::from_position(p, self.n_per_key))
            .collect()
    }

    pub fn union(&self, other: &KnowledgeMask) -> KnowledgeMask {
        assert_eq!(self.n_per_key, other.n_per_key);
        let known = self
            .known
            .iter()
            .zip(&other.known)
            .map(|(a, b)| *a || *b)
            .collect();
        KnowledgeMask {
            n_per_key: self.n_per_key,
            known,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("the signer is not a party to the verifier exchange ({from} -> {to})")]
    SignerExcluded { from: Role, to: Role },
    #[error("authentication check failed on {from} -> {to}")]
    IntegrityFailure { from: Role, to: Role },
    #[error("channel closed")]
    Closed,
}

/// The classical authenticated, encrypted channel between the verifiers.
pub trait ExchangeChannel {
    fn transfer(
        &mut self,
        from: Role,
        to: Role,
        blocks: &ExchangedBlockSet,
    ) -> Result<ExchangedBlockSet, ChannelError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub from: Role,
    pub to: Role,
    pub labels: Vec<BlockLabel>,
}

/// In-process channel with an integrity flag; no cipher is applied.
#[derive(Debug, Clone)]
pub struct SimulatedChannel {
    pub authentic: bool,
    pub log: Vec<ChannelRecord>,
}

impl Default for SimulatedChannel {
    fn default() -> Self {
        Self {
            authentic: true,
            log: Vec::new(),
        }
    }
}

impl SimulatedChannel {
    pub fn tampered() -> Self {
        Self {
            authentic: false,
            log: Vec::new(),
        }
    }
}

impl ExchangeChannel for SimulatedChannel {
    fn transfer(
        &mut self,
        from: Role,
        to: Role,
        blocks: &ExchangedBlockSet,
    ) -> Result<ExchangedBlockSet, ChannelError> {
        if !from.is_verifier() || !to.is_verifier() {
            return Err(ChannelError::SignerExcluded { from, to });
        }
        if !self.authentic {
            return Err(ChannelError::IntegrityFailure { from, to });
        }
        self.log.push(ChannelRecord {
            from,
            to,
            labels: blocks.labels().collect(),
        });
        Ok(blocks.clone())
    }
}

/// What each verifier knows once the exchange has completed.
#[derive(Debug, Clone)]
pub struct ExchangeResult {
    /// `k'_2` as received by Bob.
    pub bob_received: ExchangedBlockSet,
    /// `k'_1` as received by Charlie.
    pub charlie_received: ExchangedBlockSet,
    pub bob_mask: KnowledgeMask,
    pub charlie_mask: KnowledgeMask,
}

/// Bob sends his `k'_1` selection to Charlie and Charlie sends his `k'_2`
/// selection to Bob. The signer is never an endpoint.
pub fn exchange(
    bob_set: &ExchangedBlockSet,
    charlie_set: &ExchangedBlockSet,
    channel: &mut dyn ExchangeChannel,
) -> Result<ExchangeResult, DistributionError> {
    bob_set.validate()?;
    charlie_set.validate()?;
    if bob_set.n_blocks != charlie_set.n_blocks {
        return Err(DistributionError::DimensionMismatch {
            perm: bob_set.n_blocks,
            blocks: charlie_set.n_blocks,
        });
    }
    let charlie_received = channel.transfer(Role::Verifier1, Role::Verifier2, bob_set)?;
    let bob_received = channel.transfer(Role::Verifier2, Role::Verifier1, charlie_set)?;
    charlie_received.validate()?;
    bob_received.validate()?;
    let n = bob_set.n_blocks;
    Ok(ExchangeResult {
        bob_mask: KnowledgeMask::one_full_half(n, KeyHalf::First, bob_received.labels()),
        charlie_mask: KnowledgeMask::one_full_half(n, KeyHalf::Second, charlie_received.labels()),
        bob_received,
        charlie_received,
    })
}

/// On-disk record of one stored key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRecord {
    pub key_id: KeyId,
    pub link: LinkId,
    pub l_bits: usize,
    pub hex: String,
    pub consumed: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone)]
struct StoredKey {
    key: QkdKey,
    consumed: bool,
    created_at: DateTime<Utc>,
}

/// Keys held by one party, each usable for at most one signature.
#[derive(Debug, Default)]
pub struct KeyStore {
    inner: Mutex<BTreeMap<KeyId, StoredKey>>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, key: QkdKey) -> Result<(), DistributionError> {
        self.insert_at(key, Utc::now())
    }

    pub fn insert_at(
        &self,
        key: QkdKey,
        created_at: DateTime<Utc>,
    ) -> Result<(), DistributionError> {
        let mut inner = self.inner.lock().unwrap();
        if inner.contains_key(&key.key_id) {
            return Err(DistributionError::DuplicateKey(key.key_id));
        }
        inner.insert(
            key.key_id.clone(),
            StoredKey {
                key,
                consumed: false,
                created_at,
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &KeyId) -> Result<QkdKey, DistributionError> {
        let inner = self.inner.lock().unwrap();
        inner
            .get(id)
            .map(|s| s.key.clone())
            .ok_or_else(|| DistributionError::UnknownKey(id.clone()))
    }

    pub fn is_consumed(&self, id: &KeyId) -> Result<bool, DistributionError> {
        let inner = self.inner.lock().unwrap();
        inner
            .get(id)
            .map(|s| s.consumed)
            .ok_or_else(|| DistributionError::UnknownKey(id.clone()))
    }

    /// Marks every id consumed, or none of them if any is missing or spent.
    pub fn consume_all(&self, ids: &[&KeyId]) -> Result<(), DistributionError> {
        let mut inner = self.inner.lock().unwrap();
        for id in ids {
            match inner.get(*id) {
                None => return Err(DistributionError::UnknownKey((*id).clone())),
                Some(s) if s.consumed => return Err(DistributionError::KeyConsumed((*id).clone())),
                Some(_) => {}
            }
        }
        for id in ids {
            inner.get_mut(*id).expect("checked above").consumed = true;
        }
        Ok(())
    }

    /// Retrieves a key and marks it consumed in one step.
    pub fn take(&self, id: &KeyId) -> Result<QkdKey, DistributionError> {
        let mut inner = self.inner.lock().unwrap();
        let stored = inner
            .get_mut(id)
            .ok_or_else(|| DistributionError::UnknownKey(id.clone()))?;
        if stored.consumed {
            return Err(DistributionError::KeyConsumed(id.clone()));
        }
        stored.consumed = true;
        Ok(stored.key.clone())
    }

    /// Replaces a raw key with its SHAKE expansion; the raw key stays listed
    /// but can no longer be used.
    pub fn expand(
        &self,
        id: &KeyId,
        alg: HashAlgorithmId,
        delta_bits: usize,
    ) -> Result<QkdKey, DistributionError> {
        let raw = self.take(id)?;
        let expanded = expand_key_xof(&raw, alg, delta_bits)?;
        self.insert(expanded.clone())?;
        Ok(expanded)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<KeyRecord> {
        let inner = self.inner.lock().unwrap();
        inner
            .values()
            .map(|s| KeyRecord {
                key_id: s.key.key_id.clone(),
                link: s.key.link,
                l_bits: s.key.length_bits(),
                hex: s.key.bits.to_hex(),
                consumed: s.consumed,
                created_at: s.created_at,
            })
            .collect()
    }

    pub fn from_records(records: Vec<KeyRecord>) -> Result<Self, DistributionError> {
        let store = KeyStore::new();
        for r in records {
            let bits = BitString::from_hex(&r.hex)
                .map_err(|e| DistributionError::Format(e.to_string()))?;
            if bits.len_bits() != r.l_bits {
                return Err(DistributionError::Format(format!(
                    "key {} declares {} bits but carries {}",
                    r.key_id,
                    r.l_bits,
                    bits.len_bits()
                )));
            }
            let key = QkdKey {
                key_id: r.key_id.clone(),
                link: r.link,
                bits,
            };
            store.insert_at(key, r.created_at)?;
            if r.consumed {
                store.consume_all(&[&r.key_id])?;
            }
        }
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records()).expect("key records serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, DistributionError> {
        let records: Vec<KeyRecord> =
            serde_json::from_str(json).map_err(|e| DistributionError::Format(e.to_string()))?;
        Self::from_records(records)
    }

    pub fn save(&self, path: &Path) -> Result<(), DistributionError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DistributionError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn key(l: usize, seed: u64) -> QkdKey {
        SimulatedQkd::new(seed)
            .deliver(LinkId::AliceBob, l)
            .unwrap()
            .first
    }

    #[test]
    fn qkd_is_deterministic_and_symmetric() {
        let a = SimulatedQkd::new(7).deliver(LinkId::AliceBob, 256).unwrap();
        let b = SimulatedQkd::new(7).deliver(LinkId::AliceBob, 256).unwrap();
        assert_eq!(a.first, a.second);
        assert_eq!(a.first, b.first);
        assert_eq!(a.first.length_bits(), 256);
    }

    #[test]
    fn successive_keys_on_a_link_differ() {
        let mut qkd = SimulatedQkd::new(7);
        let k0 = qkd.deliver(LinkId::AliceBob, 256).unwrap().first;
        let k1 = qkd.deliver(LinkId::AliceBob, 256).unwrap().first;
        assert_ne!(k0.bits, k1.bits);
        assert_ne!(k0.key_id, k1.key_id);
    }

    #[test]
    fn qkd_rejects_unaligned_lengths() {
        let mut qkd = SimulatedQkd::new(1);
        assert!(matches!(
            qkd.deliver(LinkId::AliceBob, 0),
            Err(DistributionError::InvalidKeyLength(0))
        ));
        assert!(matches!(
            qkd.deliver(LinkId::AliceBob, 12),
            Err(DistributionError::InvalidKeyLength(12))
        ));
    }

    #[test]
    fn expansion_lengths() {
        let k = key(256, 3);
        let x = expand_key_xof(&k, HashAlgorithmId::Shake256, 1024).unwrap();
        assert_eq!(x.length_bits(), 1024);
        assert_eq!(
            x,
            expand_key_xof(&k, HashAlgorithmId::Shake256, 1024).unwrap()
        );
        let same = expand_key_xof(&k, HashAlgorithmId::Shake256, 256).unwrap();
        assert_eq!(
            same.bits,
            hash_suite::xof_expand(HashAlgorithmId::Shake256, &k.bits, 256).unwrap()
        );
        assert!(matches!(
            expand_key_xof(&k, HashAlgorithmId::Shake256, 128),
            Err(DistributionError::ExpansionTooShort { .. })
        ));
    }

    #[test]
    fn partition_geometry() {
        let k = expand_key_xof(&key(256, 3), HashAlgorithmId::Shake256, 1024).unwrap();
        let p = partition(&k, 32).unwrap();
        assert_eq!(p.n_blocks(), 32);
        assert_eq!(p.block_len_bits, 32);
        assert!(p.blocks().iter().all(|b| b.len_bits() == 32));
        assert_eq!(p.join(), k.bits);

        let single = partition(&k, 1).unwrap();
        assert_eq!(single.blocks()[0], k.bits);
        assert!(matches!(
            partition(&k, 3),
            Err(DistributionError::NonDivisibleLength { len: 1024, n: 3 })
        ));
    }

    #[test]
    fn exchange_selection_follows_permutation() {
        let p = partition(&key(32, 1), 4).unwrap();
        let id = select_exchange_blocks(&p, &Permutation::identity(4)).unwrap();
        assert_eq!(
            id.labels().collect::<Vec<_>>(),
            vec![BlockLabel(1), BlockLabel(2)]
        );

        let perm = Permutation::from_mapping(vec![3, 1, 4, 2]).unwrap();
        let sel = select_exchange_blocks(&p, &perm).unwrap();
        let mut labels: Vec<_> = sel.labels().collect();
        labels.sort();
        assert_eq!(labels, vec![BlockLabel(1), BlockLabel(3)]);
        assert_eq!(sel.entries[&BlockLabel(3)], *p.block(BlockLabel(3)));
        assert_eq!(sel.count(), 2);

        assert!(matches!(
            select_exchange_blocks(&p, &Permutation::identity(6)),
            Err(DistributionError::DimensionMismatch { perm: 6, blocks: 4 })
        ));
    }

    #[test]
    fn permutation_rules() {
        assert!(Permutation::from_mapping(vec![1, 1, 2]).is_err());
        assert!(Permutation::from_mapping(vec![0, 1]).is_err());
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        assert!(random_permutation(3, &mut rng).is_err());
        assert!(random_permutation(0, &mut rng).is_err());
        let two = random_permutation(2, &mut rng).unwrap();
        assert!(two.mapping() == [1, 2] || two.mapping() == [2, 1]);
        let p = random_permutation(16, &mut rng).unwrap();
        assert_eq!(p.compose(&p.inverse()), Permutation::identity(16));
        assert_eq!(p.inverse().compose(&p), Permutation::identity(16));
    }

    fn exchange_fixture(
        n: usize,
        seed: u64,
    ) -> (
        BlockPartition,
        BlockPartition,
        ExchangedBlockSet,
        ExchangedBlockSet,
    ) {
        let mut qkd = SimulatedQkd::new(seed);
        let k1 = qkd.deliver(LinkId::AliceBob, n * 8).unwrap().first;
        let k2 = qkd.deliver(LinkId::AliceCharlie, n * 8).unwrap().first;
        let (p1, p2) = (partition(&k1, n).unwrap(), partition(&k2, n).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let gb = random_permutation(n, &mut rng).unwrap();
        let gc = random_permutation(n, &mut rng).unwrap();
        let bob_set = select_exchange_blocks(&p1, &gb).unwrap();
        let charlie_set = select_exchange_blocks(&p2, &gc).unwrap();
        (p1, p2, bob_set, charlie_set)
    }

    #[test]
    fn exchange_masks_and_fidelity() {
        let n = 32;
        let (p1, p2, bob_set, charlie_set) = exchange_fixture(n, 11);
        let mut channel = SimulatedChannel::default();
        let r = exchange(&bob_set, &charlie_set, &mut channel).unwrap();
        assert_eq!(r.bob_mask.known_count(), 3 * n / 2);
        assert_eq!(r.charlie_mask.known_count(), 3 * n / 2);
        assert_eq!(r.bob_mask.unknown_labels().len(), n / 2);

        // Bob's unknowns are the k2 labels Charlie did not send.
        for u in r.bob_mask.unknown_labels() {
            assert_eq!(u.half, KeyHalf::Second);
            assert!(!charlie_set.entries.contains_key(&u.label));
        }
        for u in r.charlie_mask.unknown_labels() {
            assert_eq!(u.half, KeyHalf::First);
            assert!(!bob_set.entries.contains_key(&u.label));
        }
        for (label, bits) in &r.bob_received.entries {
            assert_eq!(bits, p2.block(*label));
        }
        for (label, bits) in &r.charlie_received.entries {
            assert_eq!(bits, p1.block(*label));
        }
        assert!(channel
            .log
            .iter()
            .all(|rec| rec.from != Role::Signer && rec.to != Role::Signer));
    }

    #[test]
    fn tampered_channel_aborts_exchange() {
        let (_, _, bob_set, charlie_set) = exchange_fixture(8, 2);
        let err = exchange(&bob_set, &charlie_set, &mut SimulatedChannel::tampered()).unwrap_err();
        assert!(matches!(
            err,
            DistributionError::Channel(ChannelError::IntegrityFailure { .. })
        ));
    }

    #[test]
    fn channel_refuses_signer_endpoint() {
        let (_, _, bob_set, _) = exchange_fixture(8, 2);
        let err = SimulatedChannel::default()
            .transfer(Role::Verifier1, Role::Signer, &bob_set)
            .unwrap_err();
        assert_eq!(
            err,
            ChannelError::SignerExcluded {
                from: Role::Verifier1,
                to: Role::Signer
            }
        );
    }

    #[test]
    fn store_consumption_is_all_or_nothing() {
        let store = KeyStore::new();
        let mut qkd = SimulatedQkd::new(9);
        let a = qkd.deliver(LinkId::AliceBob, 64).unwrap().first;
        let b = qkd.deliver(LinkId::AliceCharlie, 64).unwrap().first;
        store.insert(a.clone()).unwrap();
        store.insert(b.clone()).unwrap();
        assert!(matches!(
            store.insert(a.clone()),
            Err(DistributionError::DuplicateKey(_))
        ));

        store.consume_all(&[&b.key_id]).unwrap();
        assert!(matches!(
            store.consume_all(&[&a.key_id, &b.key_id]),
            Err(DistributionError::KeyConsumed(_))
        ));
        assert!(!store.is_consumed(&a.key_id).unwrap());
        assert!(store.take(&a.key_id).is_ok());
        assert!(matches!(
            store.take(&a.key_id),
            Err(DistributionError::KeyConsumed(_))
        ));
    }

    #[test]
    fn store_expansion_retires_raw_key() {
        let store = KeyStore::new();
        let raw = key(256, 4);
        store.insert(raw.clone()).unwrap();
        let x = store
            .expand(&raw.key_id, HashAlgorithmId::Shake256, 1024)
            .unwrap();
        assert!(store.is_consumed(&raw.key_id).unwrap());
        assert!(!store.is_consumed(&x.key_id).unwrap());
    }

    #[test]
    fn store_json_round_trip() {
        let store = KeyStore::new();
        let k = key(128, 8);
        store.insert(k.clone()).unwrap();
        store.insert(key(64, 9)).unwrap();
        store.consume_all(&[&k.key_id]).unwrap();
        let json = store.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let first = &value.as_array().unwrap()[0];
        for field in ["key_id", "link", "l_bits", "hex", "consumed", "created_at"] {
            assert!(first.get(field).is_some(), "missing {field}");
        }
        let back = KeyStore::from_json(&json).unwrap();
        assert_eq!(back.records(), store.records());
        assert_eq!(back.get(&k.key_id).unwrap(), k);
    }

    #[test]
    fn store_rejects_inconsistent_records() {
        let json = r#"[{"key_id":"x","link":"alice-bob","l_bits":16,"hex":"abcdef","consumed":false,"created_at":"2024-01-01T00:00:00Z"}]"#;
        assert!(matches!(
            KeyStore::from_json(json),
            Err(DistributionError::Format(_))
        ));
    }

    #[test]
    fn exchange_set_binary_roundtrip() {
        let key = simulate_qkd_link(
            &mut ChaCha20Rng::seed_from_u64(1),
            256,
            LinkId::AliceBob,
            KeyId("k".into()),
        );
        let p = partition(&key.unwrap(), 8).unwrap();
        let perm = random_permutation(8, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        let set = select_exchange_blocks(&p, &perm).unwrap();
        let bytes = set.encode();
        assert_eq!(ExchangedBlockSet::decode(&bytes).unwrap(), set);
        assert!(ExchangedBlockSet::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(ExchangedBlockSet::decode(&longer).is_err());
        assert!(ExchangedBlockSet::decode(&[]).is_err());
    }

    proptest! {
        #[test]
        fn partition_round_trip(bytes in proptest::collection::vec(any::<u8>(), 1..64), n_pow in 0u32..4) {
            let n = 1usize << n_pow;
            prop_assume!(bytes.len() % n == 0);
            let k = QkdKey { key_id: "p".into(), link: LinkId::AliceBob, bits: BitString::from_bytes(bytes) };
            let p = partition(&k, n).unwrap();
            prop_assert_eq!(p.join(), k.bits);
        }

        #[test]
        fn exchange_unknowns_are_symmetric(seed in any::<u64>(), half in 1usize..17) {
            let n = half * 2;
            let (_, _, bob_set, charlie_set) = exchange_fixture(n, seed);
            let r = exchange(&bob_set, &charlie_set, &mut SimulatedChannel::default()).unwrap();
            prop_assert_eq!(r.bob_mask.unknown_labels().len(), n / 2);
            prop_assert_eq!(r.charlie_mask.unknown_labels().len(), n / 2);
        }
    }
}
