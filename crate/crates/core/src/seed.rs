//! Stateless seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit seed derived from
//! the master seed and a path of integer tags (step index, iteration index,
//! run index, ...). Derivation is a pure function, so substreams can be
//! produced in any order or on any thread.

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and an ordered list of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(master), |acc, &tag| mix64(acc ^ mix64(tag.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Named tags so that unrelated streams never collide.
pub mod tag {
    pub const SAMPLER: u64 = 0x5341_4d50;
    pub const INIT: u64 = 0x494e_4954;
    pub const EVAL: u64 = 0x4556_414c;
    pub const REFERENCE: u64 = 0x5245_4645;
    pub const RUN: u64 = 0x5255_4e00;
    pub const PROBE: u64 = 0x5052_4f42;
    pub const ORACLE: u64 = 0x4f52_4143;
}
