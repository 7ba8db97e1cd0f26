//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the criteria execute one after another
//! and their timings are not distorted by each other.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use qds::adversary::{
    forgery_attack, integrity_attack, monte_carlo, repudiation_attack, trial_seed, ForgeryStrategy,
    MessageTamper, Placement, RepudiationPlan, Scenario, TRIAL_MESSAGE_BYTES,
};
use qds::analysis::{
    p_collision, p_guess, p_rep_bruteforce, p_rep_closed_form, second_preimage_strength,
    work_factor, AnalysisError, CollisionParams, SecondPreimageParams,
};
use qds::bits::BitString;
use qds::hash_suite::{
    otp_encrypt, strength_lookup, BitRange, HashAlgorithmId, HashFunction, StrengthTriple,
};
use qds::protocol_sim::{
    decode_tuple, encode_tuple, run_protocol, seeded_message, Event, Honest, PartyOutcome,
    PayloadKind, ProtocolConfig, SignedTuple, HEADER_LEN,
};
use qds::role::Role;
use qds::signing::{HashSuiteConfig, SignatureBundle};

use common::kat::{run as kat_output, VECTORS};
use common::wire::{tuple_strategy, GEOMETRIES};

const SIGMAS: f64 = 3.0;
const P_REP_32_7_PUBLISHED: f64 = 0.0034;
const P_REP_TOLERANCE: f64 = 1e-4;
/// `p_collision(128, 256)` from a 50-digit evaluation.
const P_COL_128_256_ORACLE: f64 = 0.393_469_340_287_366_6;
const P_COL_PUBLISHED_TOLERANCE: f64 = 1e-4;
const P_COL_ORACLE_TOLERANCE: f64 = 1e-12;
const REPUDIATION_TRIALS: u64 = 1_000_000;
const REPUDIATION_E1_TRIALS: u64 = 100_000;
const FORGERY_TRIALS: u64 = 100_000;
const INTEGRITY_TRIALS: u64 = 10_000;
const WIRE_CASES: u32 = 1_000;
const OTP_PAIRS: u64 = 10_000;

type Check = fn() -> Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    check: Check,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sd(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

fn repudiation_closed_form() -> Result<String, String> {
    let p = p_rep_closed_form(32, 7).map_err(|e| e.to_string())?;
    ensure((p.value - P_REP_32_7_PUBLISHED).abs() <= P_REP_TOLERANCE, || {
        format!("p_rep(32,7) = {}", p.value)
    })?;
    let mut pairs = 0;
    for n in (2..=32).step_by(2) {
        for e in 1..=n / 2 {
            let closed = p_rep_closed_form(n, e).map_err(|e| e.to_string())?;
            let brute = p_rep_bruteforce(n, e).map_err(|e| e.to_string())?;
            ensure(closed.exact() == brute.exact(), || {
                format!("n={n} e={e}: {closed} vs {brute}")
            })?;
            pairs += 1;
        }
    }
    Ok(format!(
        "p_rep(32,7) = {:.6} = {}; {pairs} (n, e) pairs exact",
        p.value,
        p.exact().unwrap()
    ))
}

fn repudiation_monte_carlo() -> Result<String, String> {
    let config = ProtocolConfig::standard();
    let p7 = p_rep_closed_form(32, 7).unwrap().value;
    let r7 = monte_carlo(
        &Scenario::Repudiation {
            plan: RepudiationPlan::random(7),
        },
        &config,
        REPUDIATION_TRIALS,
        2024,
    )
    .map_err(|e| e.to_string())?;
    ensure(r7.within_sigmas(p7, SIGMAS), || {
        format!("e=7 rate {} vs {p7} (sd {})", r7.rate, sd(p7, r7.trials))
    })?;
    let p1 = p_rep_closed_form(32, 1).unwrap().value;
    ensure(p1 == 0.5, || format!("p_rep(32,1) = {p1}"))?;
    let r1 = monte_carlo(
        &Scenario::Repudiation {
            plan: RepudiationPlan::random(1),
        },
        &config,
        REPUDIATION_E1_TRIALS,
        2025,
    )
    .map_err(|e| e.to_string())?;
    ensure(r1.within_sigmas(p1, SIGMAS), || {
        format!("e=1 rate {} vs 0.5", r1.rate)
    })?;
    Ok(format!(
        "e=7: {}/{} = {:.5} (expected {p7:.5} ± {:.5}); e=1: {:.4}",
        r7.successes,
        r7.trials,
        r7.rate,
        SIGMAS * sd(p7, r7.trials),
        r1.rate
    ))
}

fn one_significant_figure(x: f64) -> String {
    format!("{x:.0e}")
}

fn forgery_guessing() -> Result<String, String> {
    let config = ProtocolConfig::desk_scale(16).map_err(|e| e.to_string())?;
    let p = p_guess(16).unwrap().value;
    let r = monte_carlo(&Scenario::ForgeryGuess, &config, FORGERY_TRIALS, 77)
        .map_err(|e| e.to_string())?;
    ensure(r.within_sigmas(p, SIGMAS), || {
        format!("rate {} vs {p}", r.rate)
    })?;
    let (_, attempt) = forgery_attack(ForgeryStrategy::Guess, &config, 1, b"m")
        .map_err(|e| e.to_string())?;
    ensure(attempt.is_some_and(|a| a.guessed_key.is_some()), || {
        "no guessed key recorded".into()
    })?;
    let p112 = one_significant_figure(p_guess(112).unwrap().value);
    let p256 = one_significant_figure(p_guess(256).unwrap().value);
    ensure(p112 == "1e-17", || format!("p_guess(112) = {p112}"))?;
    ensure(p256 == "3e-39", || format!("p_guess(256) = {p256}"))?;
    Ok(format!(
        "l=16: {:.5} (expected {p:.5}); l=112: {p112}; l=256: {p256}",
        r.rate
    ))
}

fn honest_completeness() -> Result<String, String> {
    let config = ProtocolConfig::standard();
    for (i, len) in [0usize, 1, 1024, 1 << 20].into_iter().enumerate() {
        let seed = 500 + i as u64;
        let run = run_protocol(&config, seed, &seeded_message(seed, len), &mut Honest)
            .map_err(|e| e.to_string())?;
        ensure(run.both_accepted(), || {
            format!("{len} B: {:?}/{:?}", run.bob, run.charlie)
        })?;
        for report in [&run.bob_report, &run.charlie_report] {
            let r = report.as_ref().ok_or("missing report")?;
            ensure(r.mismatches == 0, || {
                format!("{len} B: {} mismatches", r.mismatches)
            })?;
        }
    }
    Ok("0 B, 1 B, 1 KiB, 1 MiB: both accepted, 0 mismatches".into())
}

fn integrity_attack_rows() -> Result<String, String> {
    let config = ProtocolConfig::standard();
    let mut single = 0;
    for i in 0..INTEGRITY_TRIALS {
        let seed = trial_seed(31, i);
        let message = seeded_message(seed, TRIAL_MESSAGE_BYTES);
        let tamper = if i % 2 == 0 {
            single += 1;
            let bit = ChaCha20Rng::seed_from_u64(seed).random_range(0..TRIAL_MESSAGE_BYTES * 8);
            MessageTamper::FlipBits(vec![bit])
        } else {
            MessageTamper::Random
        };
        let o = integrity_attack(&config, seed, &message, &tamper).map_err(|e| e.to_string())?;
        ensure(
            o.bob == PartyOutcome::Accepted && o.charlie == PartyOutcome::Rejected && !o.success,
            || format!("trial {i} ({tamper:?}): {:?}/{:?}", o.bob, o.charlie),
        )?;
    }
    Ok(format!(
        "{INTEGRITY_TRIALS} trials ({single} single-bit): all Bob accepted / Charlie rejected"
    ))
}

fn repudiation_abort_path() -> Result<String, String> {
    let config = ProtocolConfig::standard();
    let mut runs = 0;
    for e in 1..=16 {
        for seed in 0..25u64 {
            let plan = RepudiationPlan {
                error_blocks: e,
                placement: Placement::BobKnown,
            };
            let (o, labels) = repudiation_attack(&plan, &config, seed, b"contract")
                .map_err(|e| e.to_string())?;
            ensure(labels.len() == e, || format!("{} labels for e={e}", labels.len()))?;
            ensure(
                o.bob == PartyOutcome::Rejected && o.charlie == PartyOutcome::Aborted,
                || format!("e={e} seed={seed}: {:?}/{:?}", o.bob, o.charlie),
            )?;
            let events = o.transcript.events();
            let charlie_acted = events.iter().any(|ev| match ev {
                Event::Verified { party, .. } => *party == Role::Verifier2,
                Event::Received { to, kind, .. } => {
                    *to == Role::Verifier2 && *kind == PayloadKind::SignedTuple
                }
                _ => false,
            });
            let aborted = events
                .iter()
                .any(|ev| matches!(ev, Event::Aborted { party: Role::Verifier1, .. }));
            ensure(aborted && !charlie_acted, || {
                format!("e={e} seed={seed}: transcript does not show an abort before Charlie")
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs: Bob rejected / Charlie aborted"))
}

fn fixed(cr: u32, pr: u32, spr: BitRange) -> StrengthTriple {
    StrengthTriple {
        collision_bits: cr,
        preimage_bits: pr,
        preimage_is_lower_bound: false,
        second_preimage_bits: spr,
    }
}

fn strength_table() -> Result<String, String> {
    use HashAlgorithmId::*;
    let rows = [
        (Sha2_224, fixed(112, 224, BitRange::new(201, 224))),
        (Sha2_256, fixed(128, 256, BitRange::new(201, 256))),
        (Sha2_384, fixed(192, 384, BitRange::exact(384))),
        (Sha2_512, fixed(256, 512, BitRange::new(394, 512))),
        (Sha3_224, fixed(112, 224, BitRange::exact(224))),
        (Sha3_256, fixed(128, 256, BitRange::exact(256))),
        (Sha3_384, fixed(192, 384, BitRange::exact(384))),
        (Sha3_512, fixed(256, 512, BitRange::exact(512))),
    ];
    let mut cells = 0;
    for (alg, want) in rows {
        let got = strength_lookup(&HashFunction::fixed(alg).unwrap());
        ensure(got == want, || format!("{alg}: {got:?}"))?;
        cells += 3;
    }
    for (alg, cap) in [(Shake128, 128u32), (Shake256, 256)] {
        for delta in [8u32, 16, 64, 128, 200, 256, 384, 512, 1024, 2048] {
            let got = strength_lookup(&HashFunction::xof(alg, delta).unwrap());
            let want = StrengthTriple {
                collision_bits: (delta / 2).min(cap),
                preimage_bits: delta.min(cap),
                preimage_is_lower_bound: true,
                second_preimage_bits: BitRange::exact(delta.min(cap)),
            };
            ensure(got == want, || format!("{alg} δ={delta}: {got:?}"))?;
            cells += 3;
        }
    }
    let params = SecondPreimageParams::max_input(Sha2_384).unwrap();
    let spr = second_preimage_strength(params, Some(Sha2_384));
    ensure(spr == 384.0, || format!("2PR(SHA2-384) = {spr}"))?;
    let wf = work_factor(spr as u32);
    ensure(wf.starts_with("2^384 "), || format!("work factor {wf}"))?;
    Ok(format!("{cells} cells; 2PR(SHA2-384) = {spr}, work factor {wf}"))
}

fn collision_formula() -> Result<String, String> {
    let p = p_collision(CollisionParams::new(128, 256)).map_err(|e| e.to_string())?;
    ensure((p.value - 0.3935).abs() <= P_COL_PUBLISHED_TOLERANCE, || {
        format!("p_col(128,256) = {}", p.value)
    })?;
    ensure(
        (p.value - P_COL_128_256_ORACLE).abs() <= P_COL_ORACLE_TOLERANCE,
        || format!("p_col(128,256) = {:.19} vs oracle", p.value),
    )?;
    let (mut evaluated, mut domain) = (0u64, 0u64);
    for k in 0..=1024u32 {
        for x in 0..=1024u32 {
            match p_collision(CollisionParams::new(x, k)) {
                Ok(q) => {
                    ensure(
                        (0.0..=1.0).contains(&q.value) && !q.log2.is_nan() && q.log2 <= 0.0,
                        || format!("x={x} k={k}: value {} log2 {}", q.value, q.log2),
                    )?;
                    evaluated += 1;
                }
                Err(AnalysisError::Domain(_) | AnalysisError::InvalidParameter(_)) => domain += 1,
            }
        }
    }
    Ok(format!(
        "p_col(128,256) = {:.10}; {evaluated} grid points finite, {domain} outside the domain",
        p.value
    ))
}

fn signature_geometry() -> Result<String, String> {
    for &(l, n) in GEOMETRIES {
        let two_l = HashFunction::xof(HashAlgorithmId::Shake256, 2 * l as u32).unwrap();
        let suite = HashSuiteConfig::new(two_l, two_l, n, l).map_err(|e| e.to_string())?;
        ensure(suite.signature_bits() == 4 * n * l, || {
            format!("l={l} n={n}: {} bits", suite.signature_bits())
        })?;
        let digests = vec![BitString::zeros(2 * l); 2 * n];
        let tuple = SignedTuple::new(
            Vec::new(),
            SignatureBundle::from_digests(suite, digests).unwrap(),
        )
        .unwrap();
        let payload_bits = (encode_tuple(&tuple).len() - HEADER_LEN) * 8;
        ensure(payload_bits == 4 * n * l, || {
            format!("l={l} n={n}: {payload_bits} payload bits")
        })?;
    }
    let mut runner = TestRunner::new(Config {
        cases: WIRE_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&tuple_strategy(), |t| {
            let bytes = encode_tuple(&t);
            let back = decode_tuple(&bytes).expect("decodes");
            assert_eq!(back, t);
            assert_eq!(encode_tuple(&back), bytes);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "payload = 4nl for {} geometries; {WIRE_CASES} round-trips bit-exact",
        GEOMETRIES.len()
    ))
}

fn hash_correctness() -> Result<String, String> {
    for (alg, msg, hex) in VECTORS {
        let got = kat_output(*alg, msg, hex.len() * 4).to_hex();
        ensure(got == *hex, || format!("{alg} on {:?}", String::from_utf8_lossy(msg)))?;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for i in 0..OTP_PAIRS {
        let len = rng.random_range(0..2048usize);
        let mut k = vec![0u8; len.div_ceil(8)];
        let mut p = vec![0u8; len.div_ceil(8)];
        rng.fill_bytes(&mut k);
        rng.fill_bytes(&mut p);
        let k = BitString::from_bytes_truncated(k, len);
        let p = BitString::from_bytes_truncated(p, len);
        let c = otp_encrypt(&k, &p).map_err(|e| e.to_string())?;
        let back = otp_encrypt(&k, &c).map_err(|e| e.to_string())?;
        ensure(back == p, || format!("pair {i} (len {len})"))?;
    }
    Ok(format!(
        "{} KAT vectors over {} algorithms; {OTP_PAIRS} OTP pairs",
        VECTORS.len(),
        HashAlgorithmId::ALL.len()
    ))
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "repudiation probability, closed form and oracle",
        limit: Some(Duration::from_secs(1)),
        check: repudiation_closed_form,
    },
    Criterion {
        id: 2,
        name: "repudiation Monte Carlo",
        limit: Some(Duration::from_secs(120)),
        check: repudiation_monte_carlo,
    },
    Criterion {
        id: 3,
        name: "forgery by guessing",
        limit: None,
        check: forgery_guessing,
    },
    Criterion {
        id: 4,
        name: "honest completeness across message sizes",
        limit: Some(Duration::from_secs(10)),
        check: honest_completeness,
    },
    Criterion {
        id: 5,
        name: "integrity attack verdicts",
        limit: None,
        check: integrity_attack_rows,
    },
    Criterion {
        id: 6,
        name: "repudiation abort path",
        limit: None,
        check: repudiation_abort_path,
    },
    Criterion {
        id: 7,
        name: "hash strength table",
        limit: None,
        check: strength_table,
    },
    Criterion {
        id: 8,
        name: "collision probability formula",
        limit: None,
        check: collision_formula,
    },
    Criterion {
        id: 9,
        name: "signature geometry and wire round-trip",
        limit: None,
        check: signature_geometry,
    },
    Criterion {
        id: 10,
        name: "hash known answers and one-time pad",
        limit: None,
        check: hash_correctness,
    },
];

fn main() -> ExitCode {
    let mut failed = 0;
    for c in CRITERIA {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!(
                "took {:.2} s, limit {:.0} s",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            )),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        if result.is_err() {
            failed += 1;
        }
        println!(
            "{tag} [{:>2}] {} ({:.2} s): {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
