//! Closed-form security estimates: guessing, repudiation, collision and
//! second-preimage bounds, plus exhaustive oracles for the repudiation count.
//!
//! Exact quantities are kept as big rationals; `f64` is only the rendering.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::hash_suite::HashAlgorithmId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside the formula's domain: {0}")]
    Domain(String),
}

/// A probability with its base-2 logarithm. `log2` stays finite where
/// `value` underflows.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityValue {
    pub value: f64,
    pub log2: f64,
    exact: Option<BigRational>,
}

impl ProbabilityValue {
    pub fn from_rational(r: BigRational) -> Self {
        assert!(
            r >= BigRational::zero() && r <= BigRational::one(),
            "probability out of range: {r}"
        );
        if r.is_zero() {
            return Self {
                value: 0.0,
                log2: f64::NEG_INFINITY,
                exact: Some(r),
            };
        }
        let log2 = log2_uint(r.numer().magnitude()) - log2_uint(r.denom().magnitude());
        let value = if log2 < -1074.0 {
            0.0
        } else {
            r.to_f64().unwrap_or_else(|| log2.exp2())
        };
        Self {
            value,
            log2,
            exact: Some(r),
        }
    }

    pub fn certain() -> Self {
        Self::from_rational(BigRational::one())
    }

    pub fn impossible() -> Self {
        Self::from_rational(BigRational::zero())
    }

    fn approximate(value: f64, log2: f64) -> Self {
        Self {
            value,
            log2,
            exact: None,
        }
    }

    pub fn exact(&self) -> Option<&BigRational> {
        self.exact.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.log2 == f64::NEG_INFINITY
    }

    /// `"2^-128"`-style security level: `-log2`.
    pub fn bits_of_security(&self) -> f64 {
        -self.log2
    }
}

impl fmt::Display for ProbabilityValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            f.write_str("0")
        } else if self.value == 0.0 {
            write!(f, "2^{:.4}", self.log2)
        } else if self.value != 0.0 && self.value < 1e-4 {
            write!(f, "{:.4e} (2^{:.4})", self.value, self.log2)
        } else {
            write!(f, "{:.6} (2^{:.4})", self.value, self.log2)
        }
    }
}

impl Serialize for ProbabilityValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ProbabilityValue", 3)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field(
            "log2",
            &if self.log2.is_finite() {
                Some(self.log2)
            } else {
                None
            },
        )?;
        st.serialize_field("exact", &self.exact.as_ref().map(|r| r.to_string()))?;
        st.end()
    }
}

/// `log2(x)` for an arbitrarily large integer, from its top 64 bits.
fn log2_uint(x: &BigUint) -> f64 {
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_f64().expect("64-bit value fits an f64");
    top.log2() + shift as f64
}

fn pow2(e: u64) -> BigInt {
    BigInt::one() << e
}

fn ratio(n: BigInt, d: BigInt) -> BigRational {
    BigRational::new(n, d)
}

fn choose(n: usize, k: usize) -> BigInt {
    if k > n {
        BigInt::zero()
    } else {
        binomial(BigInt::from(n), BigInt::from(k))
    }
}

fn check_blocks(n: usize) -> Result<(), AnalysisError> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(AnalysisError::InvalidParameter(format!(
            "n={n} must be even and at least 2"
        )));
    }
    Ok(())
}

/// Probability that a forger guesses all `l/2` unknown key bits.
pub fn p_guess(l_bits: u64) -> Result<ProbabilityValue, AnalysisError> {
    if l_bits < 2 || !l_bits.is_multiple_of(2) {
        return Err(AnalysisError::InvalidParameter(format!(
            "l={l_bits} must be even and at least 2"
        )));
    }
    Ok(ProbabilityValue::from_rational(ratio(
        BigInt::one(),
        pow2(l_bits / 2),
    )))
}

/// `∏_{i=0}^{e-1} (n-2i) / (2(n-i))`: all `e` corrupted blocks miss the
/// `n/2` labels Bob knows. Zero when `e > n/2`.
pub fn p_rep_closed_form(n: usize, e: usize) -> Result<ProbabilityValue, AnalysisError> {
    check_blocks(n)?;
    if e == 0 {
        return Err(AnalysisError::InvalidParameter(
            "e must be at least 1".into(),
        ));
    }
    if e > n / 2 {
        return Ok(ProbabilityValue::from_rational(BigRational::zero()));
    }
    let mut p = BigRational::one();
    for i in 0..e {
        p *= ratio(BigInt::from(n - 2 * i), BigInt::from(2 * (n - i)));
    }
    Ok(ProbabilityValue::from_rational(p))
}

/// Counts `e`-subsets of the `n` labels that avoid Bob's known half.
/// Enumerates every subset for `n ≤ 16`, uses `C(n/2,e)/C(n,e)` up to 40.
pub fn p_rep_bruteforce(n: usize, e: usize) -> Result<ProbabilityValue, AnalysisError> {
    check_blocks(n)?;
    if n > 40 {
        return Err(AnalysisError::InvalidParameter(format!(
            "n={n} exceeds the oracle limit of 40"
        )));
    }
    if e == 0 || e > n {
        return Err(AnalysisError::InvalidParameter(format!(
            "e={e} must be in 1..={n}"
        )));
    }
    let (good, total) = if n <= 16 {
        // Bob knows labels n/2..n; any fixed half is equivalent by symmetry.
        let known: u32 = ((1u32 << (n / 2)) - 1) << (n / 2);
        let (mut good, mut total) = (0u64, 0u64);
        for subset in 0u32..(1 << n) {
            if subset.count_ones() as usize == e {
                total += 1;
                if subset & known == 0 {
                    good += 1;
                }
            }
        }
        (BigInt::from(good), BigInt::from(total))
    } else {
        (choose(n / 2, e), choose(n, e))
    };
    Ok(ProbabilityValue::from_rational(ratio(good, total)))
}

/// `P(X ≤ t_b)` for `X ~ Hypergeometric(n, n/2, e)`: at most `t_b` of the
/// corrupted blocks land in Bob's known half.
pub fn p_rep_threshold(n: usize, e: usize, t_b: usize) -> Result<ProbabilityValue, AnalysisError> {
    check_blocks(n)?;
    if e == 0 || e > n {
        return Err(AnalysisError::InvalidParameter(format!(
            "e={e} must be in 1..={n}"
        )));
    }
    let half = n / 2;
    let num = (0..=t_b.min(e)).fold(BigInt::zero(), |acc, j| {
        acc + choose(half, j) * choose(half, e - j)
    });
    Ok(ProbabilityValue::from_rational(ratio(num, choose(n, e))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionParams {
    /// Input space of `2^x` messages.
    pub input_bits: u32,
    /// Output space of `2^k` digests.
    pub digest_bits: u32,
}

impl CollisionParams {
    pub fn new(input_bits: u32, digest_bits: u32) -> Self {
        Self {
            input_bits,
            digest_bits,
        }
    }
}

/// `-expm1(-ε)` and its log2, given `ε` through its log2.
fn one_minus_exp_neg(log2_eps: f64) -> ProbabilityValue {
    use std::f64::consts::LN_2;
    if log2_eps < -60.0 {
        // 1 - e^-ε = ε (1 - ε/2 + ...)
        let eps = log2_eps.exp2();
        return ProbabilityValue::approximate(
            eps * (1.0 - eps / 2.0),
            log2_eps + (-eps / 2.0).ln_1p() / LN_2,
        );
    }
    if log2_eps > 10.0 {
        // e^-ε < e^-1024: indistinguishable from 1.
        return ProbabilityValue::approximate(1.0, 0.0);
    }
    let eps = log2_eps.exp2();
    let p = -(-eps).exp_m1();
    let log2 = if eps > 1.0 {
        (-(-eps).exp()).ln_1p() / LN_2
    } else {
        p.log2()
    };
    ProbabilityValue::approximate(p, log2)
}

/// `1 - exp(-(2^x+1)^2 / (2(2^k+1-2^x)))`, evaluated verbatim.
pub fn p_collision(params: CollisionParams) -> Result<ProbabilityValue, AnalysisError> {
    let CollisionParams {
        input_bits: x,
        digest_bits: k,
    } = params;
    if k == 0 {
        return Err(AnalysisError::InvalidParameter(
            "digest length k must be at least 1".into(),
        ));
    }
    let li = pow2(x.into()) + BigInt::one();
    let denom = (pow2(k.into()) + BigInt::one() - pow2(x.into())) * BigInt::from(2);
    if denom <= BigInt::zero() {
        return Err(AnalysisError::Domain(format!(
            "2^x must not exceed 2^k (x={x}, k={k})"
        )));
    }
    let num = &li * &li;
    let log2_eps = log2_uint(num.magnitude()) - log2_uint(denom.magnitude());
    Ok(one_minus_exp_neg(log2_eps))
}

/// Standard birthday estimate `1 - exp(-2^(2x-k-1))`, for comparison with
/// [`p_collision`]. The two agree to within a factor `1 + 2^(1-x)` in `ε`
/// once `x` is well below `k`.
pub fn birthday_approx(params: CollisionParams) -> ProbabilityValue {
    let log2_eps = 2.0 * f64::from(params.input_bits) - f64::from(params.digest_bits) - 1.0;
    one_minus_exp_neg(log2_eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondPreimageParams {
    /// Digest length `d` in bits.
    pub digest_bits: u32,
    /// Input length `D` in bits.
    pub input_bits: u128,
    /// Input block length `B` of the hash function, in bits.
    pub block_bits: u128,
}

impl SecondPreimageParams {
    pub fn new(
        digest_bits: u32,
        input_bits: u128,
        block_bits: u128,
    ) -> Result<Self, AnalysisError> {
        if block_bits == 0 || input_bits < block_bits {
            return Err(AnalysisError::InvalidParameter(format!(
                "need D ≥ B ≥ 1, got D={input_bits}, B={block_bits}"
            )));
        }
        Ok(Self {
            digest_bits,
            input_bits,
            block_bits,
        })
    }

    /// The longest input the SHA-2 padding allows: `2^64` bits for
    /// SHA2-224/256, `2^128` for SHA2-384/512.
    pub fn max_input(alg: HashAlgorithmId) -> Option<Self> {
        let d = alg.digest_bits()?;
        let b = u128::from(alg.input_block_bits());
        let max = match alg {
            HashAlgorithmId::Sha2_224 | HashAlgorithmId::Sha2_256 => 1u128 << 64,
            HashAlgorithmId::Sha2_384 | HashAlgorithmId::Sha2_512 => u128::MAX,
            _ => return None,
        };
        Some(Self {
            digest_bits: d,
            input_bits: max,
            block_bits: b,
        })
    }
}

fn log2_u128(x: u128) -> f64 {
    if x == u128::MAX {
        128.0
    } else {
        log2_uint(&BigUint::from(x))
    }
}

/// `d - log2(D/B)` for the Merkle-Damgård SHA-2 members. SHA2-384 and the
/// SHA-3 fixed-length functions are length-independent and give `d`; SHAKE
/// is capped by its capacity bound.
pub fn second_preimage_strength(params: SecondPreimageParams, alg: Option<HashAlgorithmId>) -> f64 {
    let d = f64::from(params.digest_bits);
    match alg {
        Some(HashAlgorithmId::Sha2_384) => d,
        Some(a) if a.is_xof() => {
            let cap = if a == HashAlgorithmId::Shake128 {
                128.0
            } else {
                256.0
            };
            d.min(cap)
        }
        Some(a) if !a.is_sha2() => d,
        _ => d - (log2_u128(params.input_bits) - log2_u128(params.block_bits)),
    }
}

/// `"2^N (≈ m×10^e)"`, or the exact value for small `N`.
pub fn work_factor(strength_bits: u32) -> String {
    if strength_bits < 20 {
        return format!("2^{strength_bits} ({})", 1u64 << strength_bits);
    }
    let log10 = f64::from(strength_bits) * std::f64::consts::LOG10_2;
    let mut exp = log10.floor();
    let mut mantissa = (10f64.powf(log10 - exp) * 10.0).round() / 10.0;
    if mantissa >= 10.0 {
        mantissa /= 10.0;
        exp += 1.0;
    }
    format!("2^{strength_bits} (≈ {mantissa:.1}×10^{exp})")
}
