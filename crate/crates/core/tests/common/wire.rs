use proptest::prelude::*;
use qds::bits::BitString;
use qds::hash_suite::{HashAlgorithmId, HashFunction};
use qds::protocol_sim::SignedTuple;
use qds::signing::{HashSuiteConfig, SignatureBundle};

/// Valid `(l, n)` pairs with byte-sized blocks.
pub const GEOMETRIES: &[(usize, usize)] =
    &[(16, 2), (64, 4), (128, 8), (256, 32), (512, 16), (1024, 32)];

pub fn block_hash(choice: u8, l: usize) -> HashFunction {
    match choice % 4 {
        0 => HashFunction::fixed(HashAlgorithmId::Sha2_256).unwrap(),
        1 => HashFunction::fixed(HashAlgorithmId::Sha3_384).unwrap(),
        // Block digest as long as the message digest.
        2 => HashFunction::xof(HashAlgorithmId::Shake256, 2 * l as u32).unwrap(),
        _ => HashFunction::xof(HashAlgorithmId::Shake128, 24).unwrap(),
    }
}

pub fn suite_strategy() -> impl Strategy<Value = HashSuiteConfig> {
    (0..GEOMETRIES.len(), any::<u8>(), any::<bool>()).prop_map(|(g, b, shake128)| {
        let (l, n) = GEOMETRIES[g];
        let alg = if shake128 {
            HashAlgorithmId::Shake128
        } else {
            HashAlgorithmId::Shake256
        };
        HashSuiteConfig::new(
            HashFunction::xof(alg, 2 * l as u32).unwrap(),
            block_hash(b, l),
            n,
            l,
        )
        .unwrap()
    })
}

pub fn tuple_strategy() -> impl Strategy<Value = SignedTuple> {
    (
        suite_strategy(),
        prop::collection::vec(any::<u8>(), 0..512),
        any::<u64>(),
    )
        .prop_map(|(suite, message, seed)| {
            use rand::{RngCore, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let digests = (0..suite.total_blocks())
                .map(|_| {
                    let mut d = vec![0u8; suite.block_digest_bits() / 8];
                    rng.fill_bytes(&mut d);
                    BitString::from_bytes(d)
                })
                .collect();
            SignedTuple::new(
                message,
                SignatureBundle::from_digests(suite, digests).unwrap(),
            )
            .unwrap()
        })
}

