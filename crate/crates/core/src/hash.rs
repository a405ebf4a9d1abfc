//! Process-independent hashing for group assignment, tie-breaks and seeding.
//!
//! Not cryptographic. FNV-1a over the bytes followed by a SplitMix64
//! finalizer; the output must never change between releases because group
//! membership is derived from it rather than stored.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[must_use]
pub fn stable_hash(key: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h ^ splitmix64(seed))
}

#[must_use]
pub fn stable_hash_u64(value: u64, seed: u64) -> u64 {
    splitmix64(value ^ splitmix64(seed))
}

/// Maps a hash onto `[0, 1)` using its top 53 bits.
#[must_use]
pub fn unit_interval(hash: u64) -> f64 {
    (hash >> 11) as f64 / (1u64 << 53) as f64
}
