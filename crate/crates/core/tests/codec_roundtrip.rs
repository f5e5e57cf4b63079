use iea_core::protocol::conformance::random_message;
use iea_core::protocol::{decode, encode, CodecError, PROTOCOL_VERSION};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[test]
fn generator_covers_every_variant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kinds: BTreeSet<&str> = (0..2000).map(|_| random_message(&mut rng).kind()).collect();
    assert_eq!(kinds.len(), 10, "{kinds:?}");
}

#[test]
fn empty_input_is_a_decode_error() {
    assert!(matches!(decode(&[]), Err(CodecError::Decode { offset: 0, .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn every_generated_message_round_trips(seed in any::<u64>()) {
        let msg = random_message(&mut ChaCha8Rng::seed_from_u64(seed));
        let bytes = encode(&msg);
        prop_assert_eq!(&bytes[..2], b"IE");
        prop_assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize, bytes.len() - 8);
        prop_assert_eq!(decode(&bytes), Ok(msg));
    }

    #[test]
    fn any_other_version_is_refused(seed in any::<u64>(), v in any::<u8>()) {
        prop_assume!(v != PROTOCOL_VERSION);
        let mut bytes = encode(&random_message(&mut ChaCha8Rng::seed_from_u64(seed)));
        bytes[2] = v;
        prop_assert_eq!(decode(&bytes), Err(CodecError::Version { found: v }));
    }

    #[test]
    fn truncation_is_always_detected(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let bytes = encode(&random_message(&mut ChaCha8Rng::seed_from_u64(seed)));
        let n = cut.index(bytes.len());
        let err = decode(&bytes[..n]);
        prop_assert!(matches!(err, Err(CodecError::Decode { offset, .. }) if offset <= n), "{:?}", err);
    }
}
