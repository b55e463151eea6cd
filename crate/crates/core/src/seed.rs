//! Deterministic seed derivation.
//!
//! Campaign tasks must produce the same stream of random numbers no matter
//! which worker picks them up, so every consumer derives its own seed from
//! the master seed plus a stable key instead of sharing one RNG.

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with integer components into a new seed.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &p in parts {
        state = splitmix64(state ^ p);
    }
    state
}

/// Stable 64-bit hash of a string key (FNV-1a).
pub fn hash_key(key: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Convenience: derive a seed from a master seed and a string key.
pub fn derive_named(master: u64, key: &str) -> u64 {
    derive(master, &[hash_key(key)])
}
