//! Full protocol runs between Alice (signer), Bob and Charlie (verifiers).
//!
//! A [`Session`] is created by running the distribution phase; the messaging
//! phase then consumes it. All randomness comes from the run seed, so two runs
//! with the same configuration and seed produce identical transcripts.
//!
//! Adversarial runs plug a [`Behaviour`] into the same code path. Each hook
//! only exposes the state the acting party legitimately holds; in particular
//! the signer-side hook never sees which blocks the verifiers exchanged.

pub mod transcript;
pub mod transport;
pub mod wire;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    self, BlockPartition, ChannelError, DistributionError, ExchangeChannel, ExchangedBlockSet,
    KeySource, KeyStore, KnowledgeMask, LinkId, QkdKey, SimulatedQkd,
};
use crate::hash_suite::{HashAlgorithmId, HashFunction};
use crate::role::Role;
use crate::signing::{
    self, combine_keys, CombinedKey, HashSuiteConfig, KeyShare, SigningError, VerificationReport,
    VerificationThreshold,
};

pub use transcript::{Event, PartyOutcome, PayloadKind, Phase, Transcript};
pub use transport::{
    FramedTransport, InMemoryTransport, LoopbackStream, Transport, TransportError,
};
pub use wire::{decode_tuple, encode_tuple, SignedTuple, WireError, HEADER_LEN};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Signing(#[from] SigningError),
    #[error(transparent)]
    Route(#[from] RouteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyExpansion {
    pub alg: HashAlgorithmId,
    pub delta_bits: usize,
}

/// Validated run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    raw_key_bits: usize,
    expansion: Option<KeyExpansion>,
    suite: HashSuiteConfig,
    v_b: VerificationThreshold,
    v_c: VerificationThreshold,
}

impl ProtocolConfig {
    pub fn new(
        raw_key_bits: usize,
        expansion: Option<KeyExpansion>,
        message_hash: HashFunction,
        block_hash: HashFunction,
        n_blocks: usize,
        v_b: VerificationThreshold,
        v_c: VerificationThreshold,
    ) -> Result<Self, ProtocolError> {
        if raw_key_bits == 0 || !raw_key_bits.is_multiple_of(8) {
            return Err(ProtocolError::Config(format!(
                "key length l={raw_key_bits} must be a positive multiple of 8"
            )));
        }
        let effective = match expansion {
            None => raw_key_bits,
            Some(x) => {
                if !x.alg.is_xof() {
                    return Err(ProtocolError::Config(format!(
                        "key expansion needs a SHAKE function, not {}",
                        x.alg
                    )));
                }
                if x.delta_bits < raw_key_bits || x.delta_bits % 8 != 0 {
                    return Err(ProtocolError::Config(format!(
                        "expanded length δ={} must be byte aligned and at least l={raw_key_bits}",
                        x.delta_bits
                    )));
                }
                x.delta_bits
            }
        };
        let suite = HashSuiteConfig::new(message_hash, block_hash, n_blocks, effective)
            .map_err(|e| ProtocolError::Config(e.to_string()))?;
        Ok(Self {
            raw_key_bits,
            expansion,
            suite,
            v_b,
            v_c,
        })
    }

    /// SHAKE-256 message hash at δ=2048, keys of 256 bits expanded to 1024
    /// with SHAKE-256, 32 blocks per key, SHA2-256 block hash, zero
    /// thresholds.
    pub fn standard() -> Self {
        Self::new(
            256,
            Some(KeyExpansion {
                alg: HashAlgorithmId::Shake256,
                delta_bits: 1024,
            }),
            HashFunction::xof(HashAlgorithmId::Shake256, 2048).unwrap(),
            HashFunction::fixed(HashAlgorithmId::Sha2_256).unwrap(),
            32,
            VerificationThreshold::ZERO,
            VerificationThreshold::ZERO,
        )
        .expect("standard configuration is valid")
    }

    /// Small keys without expansion: SHAKE-256 message hash at `2l`, 8-bit
    /// blocks, SHA2-256 block hash.
    pub fn desk_scale(l_bits: usize) -> Result<Self, ProtocolError> {
        let delta =
            u32::try_from(2 * l_bits).map_err(|_| ProtocolError::Config("key too long".into()))?;
        let message_hash = HashFunction::xof(HashAlgorithmId::Shake256, delta)
            .map_err(|e| ProtocolError::Config(e.to_string()))?;
        Self::new(
            l_bits,
            None,
            message_hash,
            HashFunction::fixed(HashAlgorithmId::Sha2_256).unwrap(),
            l_bits / 8,
            VerificationThreshold::ZERO,
            VerificationThreshold::ZERO,
        )
    }

    pub fn with_thresholds(
        mut self,
        v_b: VerificationThreshold,
        v_c: VerificationThreshold,
    ) -> Self {
        self.v_b = v_b;
        self.v_c = v_c;
        self
    }

    pub fn raw_key_bits(&self) -> usize {
        self.raw_key_bits
    }

    pub fn expansion(&self) -> Option<KeyExpansion> {
        self.expansion
    }

    /// Key length after optional expansion; the `l` the suite works with.
    pub fn key_bits(&self) -> usize {
        self.suite.key_length_bits()
    }

    pub fn n_blocks(&self) -> usize {
        self.suite.n_blocks_per_key()
    }

    pub fn suite(&self) -> &HashSuiteConfig {
        &self.suite
    }

    pub fn threshold(&self, role: Role) -> VerificationThreshold {
        match role {
            Role::Verifier1 => self.v_b,
            Role::Verifier2 => self.v_c,
            Role::Signer => VerificationThreshold::ZERO,
        }
    }

    pub fn v_b(&self) -> VerificationThreshold {
        self.v_b
    }

    pub fn v_c(&self) -> VerificationThreshold {
        self.v_c
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("routing policy forbids {from} -> {to} during the distribution phase")]
    SignerBlind { from: Role, to: Role },
    #[error("a party cannot send to itself")]
    SelfRoute,
    #[error("{from} -> {to}: {source}")]
    Transport {
        from: Role,
        to: Role,
        #[source]
        source: TransportError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    InMemory,
    /// Length-prefixed frames over an in-process byte stream.
    Framed,
}

/// Delivers payloads between parties and records the traffic.
pub struct Router {
    kind: TransportKind,
    links: BTreeMap<(Role, Role), Box<dyn Transport>>,
    phase: Phase,
    next_seq: u64,
}

impl Router {
    pub fn new(kind: TransportKind) -> Self {
        Self {
            kind,
            links: BTreeMap::new(),
            phase: Phase::Distribution,
            next_seq: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Installs a custom transport for one direction.
    pub fn connect(&mut self, from: Role, to: Role, transport: Box<dyn Transport>) {
        self.links.insert((from, to), transport);
    }

    pub fn close(&mut self, from: Role, to: Role) {
        self.link(from, to).close();
    }

    fn link(&mut self, from: Role, to: Role) -> &mut Box<dyn Transport> {
        let kind = self.kind;
        self.links.entry((from, to)).or_insert_with(|| match kind {
            TransportKind::InMemory => Box::new(InMemoryTransport::new()),
            TransportKind::Framed => Box::new(FramedTransport::new(LoopbackStream::new())),
        })
    }

    /// Sends `payload` and returns what the receiver got.
    pub fn route(
        &mut self,
        from: Role,
        to: Role,
        kind: PayloadKind,
        payload: &[u8],
        transcript: &mut Transcript,
    ) -> Result<Vec<u8>, RouteError> {
        if from == to {
            return Err(RouteError::SelfRoute);
        }
        if self.phase == Phase::Distribution && to == Role::Signer {
            return Err(RouteError::SignerBlind { from, to });
        }
        let phase = self.phase;
        let seq = self.next_seq;
        let link = self.link(from, to);
        link.send(payload)
            .map_err(|source| RouteError::Transport { from, to, source })?;
        transcript.push(Event::Sent {
            seq,
            phase,
            from,
            to,
            kind,
            bytes: payload.len(),
        });
        let delivered = link
            .recv()
            .map_err(|source| RouteError::Transport { from, to, source })?;
        transcript.push(Event::Received {
            seq,
            phase,
            from,
            to,
            kind,
            bytes: delivered.len(),
        });
        self.next_seq += 1;
        Ok(delivered)
    }
}

/// Routes the verifier exchange through the router so it shows up in the
/// transcript and is subject to the signer-blind policy.
struct RoutedChannel<'a> {
    router: &'a mut Router,
    transcript: &'a mut Transcript,
}

impl ExchangeChannel for RoutedChannel<'_> {
    fn transfer(
        &mut self,
        from: Role,
        to: Role,
        blocks: &ExchangedBlockSet,
    ) -> Result<ExchangedBlockSet, ChannelError> {
        if !from.is_verifier() || !to.is_verifier() {
            return Err(ChannelError::SignerExcluded { from, to });
        }
        let payload = blocks.encode();
        let delivered = self
            .router
            .route(
                from,
                to,
                PayloadKind::ExchangeBlocks,
                &payload,
                self.transcript,
            )
            .map_err(|e| match e {
                RouteError::SignerBlind { from, to } => ChannelError::SignerExcluded { from, to },
                _ => ChannelError::Closed,
            })?;
        ExchangedBlockSet::decode(&delivered)
            .map_err(|_| ChannelError::IntegrityFailure { from, to })
    }
}

/// Alice's state: both full keys and the store that enforces one-time use.
#[derive(Debug)]
pub struct SignerState {
    k1: BlockPartition,
    k2: BlockPartition,
    store: KeyStore,
}

impl SignerState {
    pub fn k1(&self) -> &BlockPartition {
        &self.k1
    }

    pub fn k2(&self) -> &BlockPartition {
        &self.k2
    }

    pub fn store(&self) -> &KeyStore {
        &self.store
    }

    pub fn combined_key(&self) -> CombinedKey {
        combine_keys(&KeyShare::full(&self.k1), &KeyShare::full(&self.k2))
            .expect("partitions share geometry")
    }
}

/// Bob or Charlie: the full key shared with Alice plus the half of the other
/// key received from the peer verifier.
#[derive(Debug, Clone)]
pub struct VerifierState {
    role: Role,
    own: BlockPartition,
    sent: ExchangedBlockSet,
    received: ExchangedBlockSet,
    threshold: VerificationThreshold,
}

/// What a verifier did with one incoming tuple.
#[derive(Debug, Clone)]
pub struct VerifierStep {
    pub outcome: PartyOutcome,
    pub report: Option<VerificationReport>,
    pub tuple: Option<SignedTuple>,
    pub failure: Option<String>,
}

impl VerifierState {
    pub fn role(&self) -> Role {
        self.role
    }

    pub fn own_partition(&self) -> &BlockPartition {
        &self.own
    }

    pub fn own_partition_mut(&mut self) -> &mut BlockPartition {
        &mut self.own
    }

    /// Blocks this verifier sent to its peer.
    pub fn sent(&self) -> &ExchangedBlockSet {
        &self.sent
    }

    /// Blocks of the other key received from the peer.
    pub fn received(&self) -> &ExchangedBlockSet {
        &self.received
    }

    pub fn threshold(&self) -> VerificationThreshold {
        self.threshold
    }

    /// `k_1 || k'_2` for Bob, `k'_1 || k_2` for Charlie.
    pub fn combined_key(&self) -> CombinedKey {
        let own = KeyShare::full(&self.own);
        let other = KeyShare::from_exchange(&self.received);
        let (first, second) = match self.role {
            Role::Verifier1 => (own, other),
            _ => (other, own),
        };
        combine_keys(&first, &second).expect("exchange keeps block geometry")
    }

    pub fn mask(&self) -> KnowledgeMask {
        self.combined_key().mask()
    }

    pub fn check(
        &self,
        tuple: &SignedTuple,
        suite: &HashSuiteConfig,
    ) -> Result<VerificationReport, SigningError> {
        let candidate = signing::compute_candidate(tuple.message(), &self.combined_key(), suite)?;
        signing::verify(tuple.signature(), &candidate, self.threshold)
    }

    /// Decodes and verifies a delivered tuple. Anything that cannot be decoded
    /// or compared is rejected.
    pub fn on_tuple(&self, bytes: &[u8], suite: &HashSuiteConfig) -> VerifierStep {
        let rejected = |reason: String, tuple| VerifierStep {
            outcome: PartyOutcome::Rejected,
            report: None,
            tuple,
            failure: Some(reason),
        };
        let tuple = match decode_tuple(bytes) {
            Ok(t) => t,
            Err(e) => return rejected(e.to_string(), None),
        };
        match self.check(&tuple, suite) {
            Ok(report) => VerifierStep {
                outcome: if report.accepted() {
                    PartyOutcome::Accepted
                } else {
                    PartyOutcome::Rejected
                },
                report: Some(report),
                tuple: Some(tuple),
                failure: None,
            },
            Err(e) => rejected(e.to_string(), Some(tuple)),
        }
    }
}

/// Hooks for scripted misbehaviour. Every default is the honest action.
pub trait Behaviour {
    /// A verifier may alter the blocks it is about to send to its peer.
    fn exchange_blocks(
        &mut self,
        _from: Role,
        _blocks: &mut ExchangedBlockSet,
        _rng: &mut ChaCha20Rng,
    ) {
    }

    /// A verifier may alter its own stored key material before messaging.
    fn stored_key(&mut self, _verifier: &mut VerifierState, _rng: &mut ChaCha20Rng) {}

    /// The signer may alter the combined key before signing. Only the
    /// signer's own state is visible here.
    fn signing_key(
        &mut self,
        _key: &mut CombinedKey,
        _signer: &SignerState,
        _rng: &mut ChaCha20Rng,
    ) {
    }

    /// Bob may replace the tuple he forwards to Charlie.
    fn forward(
        &mut self,
        tuple: SignedTuple,
        _bob: &VerifierState,
        _rng: &mut ChaCha20Rng,
    ) -> SignedTuple {
        tuple
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Honest;

impl Behaviour for Honest {}

const STREAM_PERM_BOB: u64 = 1;
const STREAM_PERM_CHARLIE: u64 = 2;
const STREAM_BEHAVIOUR: u64 = 3;
const STREAM_MESSAGE: u64 = 4;
/// Stream left to callers that need randomness outside the run itself.
pub const STREAM_EXTERNAL: u64 = 5;

/// ChaCha20 stream `id` of the run seeded with `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// A random message of `len` bytes derived from `seed`.
pub fn seeded_message(seed: u64, len: usize) -> Vec<u8> {
    use rand::RngCore;
    let mut out = vec![0u8; len];
    stream(seed, STREAM_MESSAGE).fill_bytes(&mut out);
    out
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub bob: PartyOutcome,
    pub charlie: PartyOutcome,
    pub bob_report: Option<VerificationReport>,
    pub charlie_report: Option<VerificationReport>,
    /// The tuple Alice sent.
    pub sent: SignedTuple,
    /// The tuple Bob forwarded, if he got that far.
    pub forwarded: Option<SignedTuple>,
    pub transcript: Transcript,
}

impl RunOutcome {
    pub fn outcome(&self, role: Role) -> PartyOutcome {
        match role {
            Role::Verifier1 => self.bob,
            Role::Verifier2 => self.charlie,
            Role::Signer => PartyOutcome::Accepted,
        }
    }

    pub fn both_accepted(&self) -> bool {
        self.bob == PartyOutcome::Accepted && self.charlie == PartyOutcome::Accepted
    }
}

/// State after the distribution phase, ready for one messaging run.
pub struct Session {
    config: ProtocolConfig,
    signer: SignerState,
    bob: VerifierState,
    charlie: VerifierState,
    router: Router,
    transcript: Transcript,
    rng: ChaCha20Rng,
}

impl Session {
    pub fn distribute(
        config: &ProtocolConfig,
        seed: u64,
        behaviour: &mut dyn Behaviour,
    ) -> Result<Self, ProtocolError> {
        Self::distribute_with(
            config,
            seed,
            &mut SimulatedQkd::new(seed),
            TransportKind::InMemory,
            behaviour,
        )
    }

    pub fn distribute_with(
        config: &ProtocolConfig,
        seed: u64,
        source: &mut dyn KeySource,
        transport: TransportKind,
        behaviour: &mut dyn Behaviour,
    ) -> Result<Self, ProtocolError> {
        let mut transcript = Transcript::new();
        let mut router = Router::new(transport);
        let mut rng = stream(seed, STREAM_BEHAVIOUR);
        let n = config.n_blocks();

        let ab = source.deliver(LinkId::AliceBob, config.raw_key_bits())?;
        let ac = source.deliver(LinkId::AliceCharlie, config.raw_key_bits())?;
        for d in [&ab, &ac] {
            let (first, second) = (d.first.length_bits(), d.second.length_bits());
            if first != config.raw_key_bits() || second != config.raw_key_bits() {
                return Err(DistributionError::DeliveryLength {
                    link: d.first.link,
                    expected: config.raw_key_bits(),
                    first,
                    second,
                }
                .into());
            }
        }
        for key in [&ab.first, &ac.first] {
            transcript.push(Event::KeyDelivered {
                link: key.link,
                key_id: key.key_id.clone(),
                l_bits: key.length_bits(),
            });
        }

        let store = KeyStore::new();
        store.insert(ab.first.clone())?;
        store.insert(ac.first.clone())?;
        let mut expand =
            |party: Role, key: QkdKey, store: Option<&KeyStore>| -> Result<QkdKey, ProtocolError> {
                let Some(x) = config.expansion() else {
                    return Ok(key);
                };
                let expanded = match store {
                    Some(s) => s.expand(&key.key_id, x.alg, x.delta_bits)?,
                    None => distribution::expand_key_xof(&key, x.alg, x.delta_bits)?,
                };
                transcript.push(Event::KeyExpanded {
                    party,
                    from: key.key_id,
                    to: expanded.key_id.clone(),
                    delta_bits: x.delta_bits,
                });
                Ok(expanded)
            };
        let alice_k1 = expand(Role::Signer, ab.first, Some(&store))?;
        let alice_k2 = expand(Role::Signer, ac.first, Some(&store))?;
        let bob_k1 = expand(Role::Verifier1, ab.second, None)?;
        let charlie_k2 = expand(Role::Verifier2, ac.second, None)?;

        let mut split = |party: Role, key: &QkdKey| -> Result<BlockPartition, ProtocolError> {
            let p = distribution::partition(key, n)?;
            transcript.push(Event::Partitioned {
                party,
                key_id: key.key_id.clone(),
                n_blocks: p.n_blocks(),
                block_bits: p.block_len_bits,
            });
            Ok(p)
        };
        let signer = SignerState {
            k1: split(Role::Signer, &alice_k1)?,
            k2: split(Role::Signer, &alice_k2)?,
            store,
        };
        let bob_own = split(Role::Verifier1, &bob_k1)?;
        let charlie_own = split(Role::Verifier2, &charlie_k2)?;

        let gamma_b = distribution::random_permutation(n, &mut stream(seed, STREAM_PERM_BOB))?;
        transcript.push(Event::PermutationDrawn {
            party: Role::Verifier1,
        });
        let gamma_c = distribution::random_permutation(n, &mut stream(seed, STREAM_PERM_CHARLIE))?;
        transcript.push(Event::PermutationDrawn {
            party: Role::Verifier2,
        });

        let mut bob_sends = distribution::select_exchange_blocks(&bob_own, &gamma_b)?;
        let mut charlie_sends = distribution::select_exchange_blocks(&charlie_own, &gamma_c)?;
        behaviour.exchange_blocks(Role::Verifier1, &mut bob_sends, &mut rng);
        behaviour.exchange_blocks(Role::Verifier2, &mut charlie_sends, &mut rng);

        let exchanged = {
            let mut channel = RoutedChannel {
                router: &mut router,
                transcript: &mut transcript,
            };
            distribution::exchange(&bob_sends, &charlie_sends, &mut channel)?
        };

        Ok(Self {
            config: *config,
            signer,
            bob: VerifierState {
                role: Role::Verifier1,
                own: bob_own,
                sent: bob_sends,
                received: exchanged.bob_received,
                threshold: config.v_b(),
            },
            charlie: VerifierState {
                role: Role::Verifier2,
                own: charlie_own,
                sent: charlie_sends,
                received: exchanged.charlie_received,
                threshold: config.v_c(),
            },
            router,
            transcript,
            rng,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn signer(&self) -> &SignerState {
        &self.signer
    }

    pub fn bob(&self) -> &VerifierState {
        &self.bob
    }

    pub fn charlie(&self) -> &VerifierState {
        &self.charlie
    }

    pub fn verifier(&self, role: Role) -> &VerifierState {
        match role {
            Role::Verifier1 => &self.bob,
            Role::Verifier2 => &self.charlie,
            Role::Signer => panic!("the signer is not a verifier"),
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn router_mut(&mut self) -> &mut Router {
        &mut self.router
    }

    /// Signs `message` at Alice, verifies at Bob, forwards and verifies at
    /// Charlie. A rejection at Bob aborts the run before Charlie acts.
    pub fn run_messaging(
        mut self,
        message: &[u8],
        behaviour: &mut dyn Behaviour,
    ) -> Result<RunOutcome, ProtocolError> {
        let suite = *self.config.suite();
        behaviour.stored_key(&mut self.bob, &mut self.rng);
        behaviour.stored_key(&mut self.charlie, &mut self.rng);
        self.router.set_phase(Phase::Messaging);

        let mut key = self.signer.combined_key();
        behaviour.signing_key(&mut key, &self.signer, &mut self.rng);
        let signature = signing::sign(message, &key, &suite, &self.signer.store)?;
        self.transcript.push(Event::Signed {
            party: Role::Signer,
            message_bytes: message.len(),
            signature_bits: signature.total_bits(),
        });
        let sent = SignedTuple::new(message.to_vec(), signature).expect("signatures are complete");

        let delivered = self.router.route(
            Role::Signer,
            Role::Verifier1,
            PayloadKind::SignedTuple,
            &encode_tuple(&sent),
            &mut self.transcript,
        )?;
        let bob_step = self.bob.on_tuple(&delivered, &suite);
        self.record(Role::Verifier1, &bob_step);

        if bob_step.outcome != PartyOutcome::Accepted {
            self.transcript.push(Event::Aborted {
                party: Role::Verifier1,
                reason: bob_step
                    .failure
                    .clone()
                    .unwrap_or_else(|| "signature rejected".into()),
            });
            self.transcript.push(Event::Verdict {
                party: Role::Verifier2,
                outcome: PartyOutcome::Aborted,
            });
            return Ok(RunOutcome {
                bob: bob_step.outcome,
                charlie: PartyOutcome::Aborted,
                bob_report: bob_step.report,
                charlie_report: None,
                sent,
                forwarded: None,
                transcript: self.transcript,
            });
        }

        let received = bob_step
            .tuple
            .clone()
            .expect("accepted tuples were decoded");
        let forwarded = behaviour.forward(received, &self.bob, &mut self.rng);
        let delivered = self.router.route(
            Role::Verifier1,
            Role::Verifier2,
            PayloadKind::SignedTuple,
            &encode_tuple(&forwarded),
            &mut self.transcript,
        )?;
        let charlie_step = self.charlie.on_tuple(&delivered, &suite);
        self.record(Role::Verifier2, &charlie_step);

        Ok(RunOutcome {
            bob: bob_step.outcome,
            charlie: charlie_step.outcome,
            bob_report: bob_step.report,
            charlie_report: charlie_step.report,
            sent,
            forwarded: Some(forwarded),
            transcript: self.transcript,
        })
    }

    fn record(&mut self, party: Role, step: &VerifierStep) {
        if let Some(report) = &step.report {
            self.transcript.push(Event::Verified {
                party,
                report: report.clone(),
            });
        }
        self.transcript.push(Event::Verdict {
            party,
            outcome: step.outcome,
        });
    }
}

pub fn run_protocol(
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
    behaviour: &mut dyn Behaviour,
) -> Result<RunOutcome, ProtocolError> {
    Session::distribute(config, seed, behaviour)?.run_messaging(message, behaviour)
}

/// Honest run: distribution, signing, verification at both verifiers.
pub fn run_honest_protocol(
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
) -> Result<Transcript, ProtocolError> {
    Ok(run_protocol(config, seed, message, &mut Honest)?.transcript)
}
