//! Derivation of independent stream seeds from one global seed.
//!
//! `derive_seed(seed, name, index)` folds the bytes of `name` with 64-bit
//! FNV-1a, combines the result with `seed` and `index`, and finishes with the
//! SplitMix64 output function. Streams are then drawn from
//! `Xoshiro256StarStar::seed_from_u64(derived)`.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(seed ^ h) ^ index)
}
