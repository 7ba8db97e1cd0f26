//! Scripted attacks over the honest protocol machinery.
//!
//! Every scenario runs [`Session::distribute`] and [`Session::run_messaging`]
//! with a [`Behaviour`] that overrides one party's actions.

use rand::seq::index::sample;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::distribution::{BlockLabel, BlockPartition, CombinedLabel, ExchangedBlockSet, KeyHalf};
use crate::protocol_sim::{
    self, seeded_message, Behaviour, PartyOutcome, ProtocolConfig, ProtocolError, Session,
    SignedTuple, SignerState, Transcript, VerifierState,
};
use crate::role::Role;
use crate::signing::{self, CombinedKey, VerificationReport};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("invalid attack plan: {0}")]
    InvalidPlan(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Integrity,
    ForgeryGuess,
    ForgeryReuse,
    Repudiation,
    Dos,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Integrity,
        AttackKind::ForgeryGuess,
        AttackKind::ForgeryReuse,
        AttackKind::Repudiation,
        AttackKind::Dos,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Integrity => "integrity",
            AttackKind::ForgeryGuess => "forgery_guess",
            AttackKind::ForgeryReuse => "forgery_reuse",
            AttackKind::Repudiation => "repudiation",
            AttackKind::Dos => "dos",
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub bob: PartyOutcome,
    pub charlie: PartyOutcome,
    pub success: bool,
    pub bob_report: Option<VerificationReport>,
    pub charlie_report: Option<VerificationReport>,
    pub transcript: Transcript,
}

/// How Bob changes the message before forwarding it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum MessageTamper {
    /// Forward `m` unchanged.
    None,
    /// Flip the listed bit positions of `m` (MSB-first, modulo its length).
    FlipBits(Vec<usize>),
    Replace(Vec<u8>),
    /// Flip between 1 and 8 distinct random bits.
    Random,
}

impl MessageTamper {
    fn apply(&self, m: &[u8], rng: &mut dyn RngCore) -> Vec<u8> {
        let mut out = m.to_vec();
        match self {
            MessageTamper::None => {}
            MessageTamper::Replace(r) => out = r.clone(),
            MessageTamper::FlipBits(positions) => {
                if out.is_empty() {
                    out.push(0);
                }
                let bits = out.len() * 8;
                for p in positions {
                    let p = p % bits;
                    out[p / 8] ^= 0x80 >> (p % 8);
                }
            }
            MessageTamper::Random => {
                if out.is_empty() {
                    out.push(rng.random());
                } else {
                    let bits = out.len() * 8;
                    let count = rng.random_range(1..=8.min(bits));
                    for p in sample(rng, bits, count) {
                        out[p / 8] ^= 0x80 >> (p % 8);
                    }
                }
            }
        }
        out
    }
}

/// Flips the first bit of `m`, or appends a byte to an empty message.
fn altered(m: &[u8]) -> Vec<u8> {
    let mut out = m.to_vec();
    match out.first_mut() {
        Some(b) => *b ^= 0x80,
        None => out.push(0),
    }
    out
}

fn random_block(bits: usize, rng: &mut dyn RngCore) -> BitString {
    let mut bytes = vec![0u8; bits.div_ceil(8)];
    rng.fill_bytes(&mut bytes);
    BitString::from_bytes_truncated(bytes, bits)
}

fn flip_block(bits: &BitString) -> BitString {
    bits.xor(&BitString::ones(bits.len_bits()))
        .expect("equal lengths")
}

fn outcome(kind: AttackKind, run: protocol_sim::RunOutcome, success: bool) -> AttackOutcome {
    AttackOutcome {
        kind,
        bob: run.bob,
        charlie: run.charlie,
        success,
        bob_report: run.bob_report,
        charlie_report: run.charlie_report,
        transcript: run.transcript,
    }
}

/// Charlie accepted a message other than the one Alice signed.
fn forged_accept(run: &protocol_sim::RunOutcome) -> bool {
    run.charlie == PartyOutcome::Accepted
        && run
            .forwarded
            .as_ref()
            .is_some_and(|f| f.message() != run.sent.message())
}

struct IntegrityBob<'a> {
    tamper: &'a MessageTamper,
}

impl Behaviour for IntegrityBob<'_> {
    fn forward(
        &mut self,
        tuple: SignedTuple,
        _bob: &VerifierState,
        rng: &mut ChaCha20Rng,
    ) -> SignedTuple {
        let m = self.tamper.apply(tuple.message(), rng);
        tuple.with_message(m)
    }
}

/// Bob verifies honestly, then forwards `(M, S_a)` with a tampered `M`.
pub fn integrity_attack(
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
    tamper: &MessageTamper,
) -> Result<AttackOutcome, AdversaryError> {
    let mut bob = IntegrityBob { tamper };
    let session = Session::distribute(config, seed, &mut bob)?;
    let run = session.run_messaging(message, &mut bob)?;
    let success = forged_accept(&run);
    Ok(outcome(AttackKind::Integrity, run, success))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryStrategy {
    /// Fill the unknown `k_2` blocks with uniform guesses.
    Guess,
    /// Replay Alice's signature with the altered message.
    Reuse,
    /// Fill the unknown blocks with the true `k_2`.
    Oracle,
}

/// What Bob does to produce `(M, S_f)`.
#[derive(Debug, Clone)]
pub struct ForgeryAttempt {
    pub message: Vec<u8>,
    /// `k_1 || K`; absent only for replay.
    pub guessed_key: Option<CombinedKey>,
    pub forged: SignedTuple,
}

struct ForgingBob {
    strategy: ForgeryStrategy,
    true_k2: Option<BlockPartition>,
    attempt: Option<ForgeryAttempt>,
}

impl Behaviour for ForgingBob {
    fn forward(
        &mut self,
        tuple: SignedTuple,
        bob: &VerifierState,
        rng: &mut ChaCha20Rng,
    ) -> SignedTuple {
        let message = altered(tuple.message());
        if self.strategy == ForgeryStrategy::Reuse {
            let forged = tuple.with_message(message.clone());
            self.attempt = Some(ForgeryAttempt {
                message,
                guessed_key: None,
                forged: forged.clone(),
            });
            return forged;
        }
        let suite = *tuple.suite();
        let mut key = bob.combined_key();
        let unknown: Vec<CombinedLabel> = key
            .second_half_labels()
            .filter(|l| key.block(*l).is_none())
            .collect();
        for label in unknown {
            let bits = match &self.true_k2 {
                Some(k2) => k2.block(label.label).clone(),
                None => random_block(key.block_len_bits(), rng),
            };
            key.replace_block(label, bits);
        }
        let bundle = signing::compute_candidate(&message, &key, &suite)
            .expect("Bob's key matches the suite");
        let forged =
            SignedTuple::new(message.clone(), bundle).expect("a full key gives a complete bundle");
        self.attempt = Some(ForgeryAttempt {
            message,
            guessed_key: Some(key),
            forged: forged.clone(),
        });
        forged
    }
}

/// Bob forges `S_f` for a message `M ≠ m` and sends it to Charlie.
pub fn forgery_attack(
    strategy: ForgeryStrategy,
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
) -> Result<(AttackOutcome, Option<ForgeryAttempt>), AdversaryError> {
    let mut bob = ForgingBob {
        strategy,
        true_k2: None,
        attempt: None,
    };
    let session = Session::distribute(config, seed, &mut bob)?;
    if strategy == ForgeryStrategy::Oracle {
        bob.true_k2 = Some(session.signer().k2().clone());
    }
    let run = session.run_messaging(message, &mut bob)?;
    let success = forged_accept(&run);
    let kind = match strategy {
        ForgeryStrategy::Reuse => AttackKind::ForgeryReuse,
        _ => AttackKind::ForgeryGuess,
    };
    Ok((outcome(kind, run, success), bob.attempt))
}

/// Where Alice puts her `e` corrupted `k_2` blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "labels")]
pub enum Placement {
    /// `e` distinct labels chosen uniformly; all Alice can do without
    /// knowing the exchange.
    Random,
    Labels(Vec<u32>),
    /// All among the labels Bob did not receive.
    BobUnknown,
    /// At least one label Bob knows.
    BobKnown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepudiationPlan {
    pub error_blocks: usize,
    pub placement: Placement,
}

impl RepudiationPlan {
    pub fn random(e: usize) -> Self {
        Self {
            error_blocks: e,
            placement: Placement::Random,
        }
    }
}

struct RepudiatingAlice {
    n: usize,
    e: usize,
    /// Fixed labels, or `None` to draw them at signing time.
    labels: Option<Vec<BlockLabel>>,
    chosen: Vec<BlockLabel>,
}

impl Behaviour for RepudiatingAlice {
    fn signing_key(&mut self, key: &mut CombinedKey, _signer: &SignerState, rng: &mut ChaCha20Rng) {
        let labels = match &self.labels {
            Some(l) => l.clone(),
            None => sample(rng, self.n, self.e)
                .into_iter()
                .map(BlockLabel::from_index)
                .collect(),
        };
        for label in &labels {
            let at = CombinedLabel {
                half: KeyHalf::Second,
                label: *label,
            };
            let corrupted = flip_block(key.block(at).expect("the signer holds the full key"));
            key.replace_block(at, corrupted);
        }
        self.chosen = labels;
    }
}

fn resolve_labels(
    plan: &RepudiationPlan,
    n: usize,
    bob_received: &ExchangedBlockSet,
    rng: &mut dyn RngCore,
) -> Result<Option<Vec<BlockLabel>>, AdversaryError> {
    let e = plan.error_blocks;
    let known: Vec<BlockLabel> = bob_received.labels().collect();
    let unknown: Vec<BlockLabel> = (1..=n as u32)
        .map(BlockLabel)
        .filter(|l| !known.contains(l))
        .collect();
    let pick = |pool: &[BlockLabel], k: usize, rng: &mut dyn RngCore| -> Vec<BlockLabel> {
        sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    Ok(match &plan.placement {
        Placement::Random => None,
        Placement::Labels(raw) => {
            let mut labels: Vec<BlockLabel> = raw.iter().copied().map(BlockLabel).collect();
            labels.sort();
            labels.dedup();
            if labels.len() != raw.len() || labels.iter().any(|l| l.0 == 0 || l.0 as usize > n) {
                return Err(AdversaryError::InvalidPlan(format!(
                    "labels must be distinct and within B1..B{n}"
                )));
            }
            if labels.len() != e {
                return Err(AdversaryError::InvalidPlan(format!(
                    "{} labels given for e={e}",
                    labels.len()
                )));
            }
            Some(labels)
        }
        Placement::BobUnknown => {
            if e > unknown.len() {
                return Err(AdversaryError::InvalidPlan(format!(
                    "only {} labels are unknown to Bob",
                    unknown.len()
                )));
            }
            Some(pick(&unknown, e, rng))
        }
        Placement::BobKnown => {
            let mut labels = pick(&known, 1, rng);
            let rest: Vec<BlockLabel> = (1..=n as u32)
                .map(BlockLabel)
                .filter(|l| *l != labels[0])
                .collect();
            labels.extend(pick(&rest, e - 1, rng));
            Some(labels)
        }
    })
}

/// Alice signs with `k_1 || K` where `K` differs from `k_2` in `e` whole
/// blocks. Succeeds when Bob accepts and Charlie rejects.
pub fn repudiation_attack(
    plan: &RepudiationPlan,
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
) -> Result<(AttackOutcome, Vec<BlockLabel>), AdversaryError> {
    let n = config.n_blocks();
    if plan.error_blocks == 0 || plan.error_blocks > n {
        return Err(AdversaryError::InvalidPlan(format!(
            "e={} must be in 1..={n}",
            plan.error_blocks
        )));
    }
    let mut alice = RepudiatingAlice {
        n,
        e: plan.error_blocks,
        labels: None,
        chosen: Vec::new(),
    };
    let session = Session::distribute(config, seed, &mut alice)?;
    // Oracle placements read the exchange outcome; `Random` never does.
    let mut planner = protocol_sim::stream(seed, protocol_sim::STREAM_EXTERNAL);
    alice.labels = resolve_labels(plan, n, session.bob().received(), &mut planner)?;
    let run = session.run_messaging(message, &mut alice)?;
    let success = run.bob == PartyOutcome::Accepted && run.charlie == PartyOutcome::Rejected;
    Ok((outcome(AttackKind::Repudiation, run, success), alice.chosen))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosVector {
    /// Corrupt blocks of the verifier's own stored key.
    OwnKey,
    /// Send corrupted blocks to the peer verifier during the exchange.
    PoisonedExchange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DosPlan {
    pub corrupter: Role,
    pub vector: DosVector,
    pub blocks: usize,
}

struct DosVerifier {
    plan: DosPlan,
}

impl Behaviour for DosVerifier {
    fn exchange_blocks(
        &mut self,
        from: Role,
        blocks: &mut ExchangedBlockSet,
        rng: &mut ChaCha20Rng,
    ) {
        if self.plan.vector != DosVector::PoisonedExchange || from != self.plan.corrupter {
            return;
        }
        let labels: Vec<BlockLabel> = blocks.labels().collect();
        for i in sample(rng, labels.len(), self.plan.blocks) {
            let b = blocks
                .entries
                .get_mut(&labels[i])
                .expect("label from this set");
            *b = flip_block(b);
        }
    }

    fn stored_key(&mut self, verifier: &mut VerifierState, rng: &mut ChaCha20Rng) {
        if self.plan.vector != DosVector::OwnKey || verifier.role() != self.plan.corrupter {
            return;
        }
        let own = verifier.own_partition_mut();
        for i in sample(rng, own.n_blocks(), self.plan.blocks) {
            let b = own.block_mut(BlockLabel::from_index(i));
            *b = flip_block(b);
        }
    }
}

/// A verifier misreports key material; success is a forced rejection of an
/// honest signature.
pub fn dos_scenario(
    plan: DosPlan,
    config: &ProtocolConfig,
    seed: u64,
    message: &[u8],
) -> Result<AttackOutcome, AdversaryError> {
    if !plan.corrupter.is_verifier() {
        return Err(AdversaryError::InvalidPlan(
            "the corrupter must be a verifier".into(),
        ));
    }
    let limit = match plan.vector {
        DosVector::OwnKey => config.n_blocks(),
        DosVector::PoisonedExchange => config.n_blocks() / 2,
    };
    if plan.blocks > limit {
        return Err(AdversaryError::InvalidPlan(format!(
            "at most {limit} blocks can be corrupted"
        )));
    }
    let mut v = DosVerifier { plan };
    let run = protocol_sim::run_protocol(config, seed, message, &mut v)?;
    let success = run.bob == PartyOutcome::Rejected || run.charlie == PartyOutcome::Rejected;
    Ok(outcome(AttackKind::Dos, run, success))
}

/// One Monte Carlo scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    Integrity { tamper: MessageTamper },
    ForgeryGuess,
    ForgeryReuse,
    Repudiation { plan: RepudiationPlan },
    Dos { plan: DosPlan },
}

impl Scenario {
    pub fn kind(&self) -> AttackKind {
        match self {
            Scenario::Integrity { .. } => AttackKind::Integrity,
            Scenario::ForgeryGuess => AttackKind::ForgeryGuess,
            Scenario::ForgeryReuse => AttackKind::ForgeryReuse,
            Scenario::Repudiation { .. } => AttackKind::Repudiation,
            Scenario::Dos { .. } => AttackKind::Dos,
        }
    }

    pub fn run(
        &self,
        config: &ProtocolConfig,
        seed: u64,
        message: &[u8],
    ) -> Result<AttackOutcome, AdversaryError> {
        match self {
            Scenario::Integrity { tamper } => integrity_attack(config, seed, message, tamper),
            Scenario::ForgeryGuess => {
                Ok(forgery_attack(ForgeryStrategy::Guess, config, seed, message)?.0)
            }
            Scenario::ForgeryReuse => {
                Ok(forgery_attack(ForgeryStrategy::Reuse, config, seed, message)?.0)
            }
            Scenario::Repudiation { plan } => {
                Ok(repudiation_attack(plan, config, seed, message)?.0)
            }
            Scenario::Dos { plan } => dos_scenario(*plan, config, seed, message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub kind: AttackKind,
    pub params: serde_json::Value,
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

impl MonteCarloReport {
    /// `|rate - p| ≤ sigmas · sqrt(p(1-p)/trials)`.
    pub fn within_sigmas(&self, expected: f64, sigmas: f64) -> bool {
        let sd = (expected * (1.0 - expected) / self.trials as f64).sqrt();
        (self.rate - expected).abs() <= sigmas * sd
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if successes == trials {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (low, high)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `i` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, i: u64) -> u64 {
    splitmix64(seed ^ splitmix64(i))
}

/// Length of the random message signed in each trial.
pub const TRIAL_MESSAGE_BYTES: usize = 32;

/// Independent seeded trials, in parallel. The count is independent of
/// thread scheduling.
pub fn monte_carlo(
    scenario: &Scenario,
    config: &ProtocolConfig,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloReport, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::InvalidPlan(
            "at least one trial is required".into(),
        ));
    }
    let successes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = trial_seed(seed, i);
            let message = seeded_message(s, TRIAL_MESSAGE_BYTES);
            scenario
                .run(config, s, &message)
                .map(|o| u64::from(o.success))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let (ci_low, ci_high) = wilson_interval(successes, trials);
    Ok(MonteCarloReport {
        kind: scenario.kind(),
        params: serde_json::to_value(scenario).expect("scenarios serialize"),
        trials,
        successes,
        rate: successes as f64 / trials as f64,
        ci_low,
        ci_high,
        seed,
    })
}
