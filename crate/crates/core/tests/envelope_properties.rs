mod support;

use std::collections::BTreeSet;

use medclaim_core::envelope::{parse, serialize, validate, EnvelopeError};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use support::envgen;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>()) {
        let env = envgen::envelope(&mut StdRng::seed_from_u64(seed));
        let bytes = serialize(&env).unwrap();
        prop_assert_eq!(parse(&bytes).unwrap(), env);
        prop_assert!(validate(&bytes).valid);
    }

    #[test]
    fn distinct_envelopes_serialize_differently(a in any::<u64>(), b in any::<u64>()) {
        let x = envgen::envelope(&mut StdRng::seed_from_u64(a));
        let y = envgen::envelope(&mut StdRng::seed_from_u64(b));
        prop_assert_eq!(x == y, serialize(&x).unwrap() == serialize(&y).unwrap());
    }
}

#[test]
fn generator_covers_every_payload() {
    let mut rng = StdRng::seed_from_u64(7);
    let seen: BTreeSet<&str> = (0..2000).map(|_| envgen::element_name(&envgen::envelope(&mut rng))).collect();
    for name in medclaim_core::envelope::BODY_ELEMENTS {
        assert!(seen.contains(name), "{name} never generated");
    }
}

#[test]
fn random_bytes_never_panic() {
    let mut rng = StdRng::seed_from_u64(11);
    let seed_doc = serialize(&envgen::envelope(&mut rng)).unwrap();
    for i in 0..100_000 {
        let doc: Vec<u8> = if i % 2 == 0 {
            let len = rng.random_range(0..256);
            (0..len).map(|_| rng.random()).collect()
        } else {
            let mut d = seed_doc.clone();
            let cut = rng.random_range(0..d.len());
            d.truncate(cut);
            d
        };
        let parsed = parse(&doc);
        let report = validate(&doc);
        assert_eq!(parsed.is_ok(), report.valid);
    }
}

fn mutate(rng: &mut StdRng, doc: &[u8]) -> Vec<u8> {
    let mut d = doc.to_vec();
    let i = rng.random_range(0..d.len());
    match rng.random_range(0..4) {
        0 => {
            let old = d[i];
            while d[i] == old {
                d[i] = rng.random_range(0x20..0x7f);
            }
        }
        1 => {
            d.remove(i);
        }
        2 => d.insert(i, *b"<>&/ \n\"=aZ0".choose(rng).unwrap()),
        _ => {
            // Duplicate a whole line, typically an element.
            let text = String::from_utf8(d).unwrap();
            let lines: Vec<&str> = text.split_inclusive('\n').collect();
            let k = rng.random_range(2..lines.len() - 1);
            let mut out = String::new();
            for (j, l) in lines.iter().enumerate() {
                out.push_str(l);
                if j == k {
                    out.push_str(l);
                }
            }
            return out.into_bytes();
        }
    }
    d
}

#[test]
fn mutated_documents_are_rejected_or_still_canonical() {
    let mut rng = StdRng::seed_from_u64(23);
    let (mut rejected, mut survived) = (0, 0);
    for _ in 0..1000 {
        let original = serialize(&envgen::envelope(&mut rng)).unwrap();
        let doc = mutate(&mut rng, &original);
        match parse(&doc) {
            Ok(env) => {
                // Anything accepted must be exactly the canonical rendering of what was read.
                assert_eq!(serialize(&env).unwrap(), doc);
                assert_ne!(doc, original);
                survived += 1;
            }
            Err(EnvelopeError::MalformedXml { .. })
            | Err(EnvelopeError::SchemaViolation(_))
            | Err(EnvelopeError::UnknownOperation(_)) => {
                assert!(!validate(&doc).valid);
                rejected += 1;
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }
    assert!(rejected > 500, "only {rejected} rejected, {survived} survived");
}
