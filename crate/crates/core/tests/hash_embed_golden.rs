//! Pinned hash-embedder outputs. The golden file was produced once by a
//! separate script; this test also re-derives every value with its own
//! keyed generator so that a change to either side is caught.

use hyperpersona::embedding::{hash_embed, hash_token_vector};
use hyperpersona::segment::segment;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    token: String,
    dim: usize,
    seed: u64,
    bits: Vec<u32>,
}

fn cases() -> Vec<Case> {
    serde_json::from_str(include_str!("golden/hash_embed.json")).unwrap()
}

/// Wide-integer re-implementation of the keyed generator.
fn mix(z: u64) -> u64 {
    const MASK: u128 = u64::MAX as u128;
    let mut z = (z as u128 + 0x9E37_79B9_7F4A_7C15) & MASK;
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK;
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK;
    (z ^ (z >> 31)) as u64
}

fn reference_vector(token: &str, dim: usize, seed: u64) -> Vec<u32> {
    let mut h: u128 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h = ((h ^ b as u128) * 0x100_0000_01b3) & u64::MAX as u128;
    }
    let key = mix(seed ^ h as u64);
    (1..=dim as u128)
        .map(|i| {
            let salt = (i * 0x9E37_79B9_7F4A_7C15) as u64;
            let top = mix(key ^ salt) >> 11;
            let u = top as f64 / 9_007_199_254_740_992.0;
            ((u + u - 1.0) as f32).to_bits()
        })
        .collect()
}

#[test]
fn implementation_matches_golden_file() {
    for c in cases() {
        let got: Vec<u32> = hash_token_vector(&c.token, c.dim, c.seed)
            .into_iter()
            .map(f32::to_bits)
            .collect();
        assert_eq!(got, c.bits, "token {:?} seed {}", c.token, c.seed);
    }
}

#[test]
fn reference_generator_matches_golden_file() {
    for c in cases() {
        assert_eq!(reference_vector(&c.token, c.dim, c.seed), c.bits);
    }
}

#[test]
fn first_component_pin() {
    let v = hash_token_vector("happy", 8, 0);
    assert_eq!(v[0].to_bits(), 1060259433);
}

#[test]
fn composition_is_mean_of_parts() {
    let d = segment("d", "happy cat. happy dog sleeps.").unwrap();
    let b = hash_embed(&d, 6, 9).unwrap();
    assert_eq!(b.word_vecs[0][0], b.word_vecs[1][0]);
    for i in 0..6 {
        let s0 = (b.word_vecs[0][0][i] as f64 + b.word_vecs[0][1][i] as f64) / 2.0;
        assert!((b.sent_vecs[0][i] as f64 - s0).abs() <= 1e-6);
        let d0 = (b.sent_vecs[0][i] as f64 + b.sent_vecs[1][i] as f64) / 2.0;
        assert!((b.doc_vec[i] as f64 - d0).abs() <= 1e-6);
    }
}
