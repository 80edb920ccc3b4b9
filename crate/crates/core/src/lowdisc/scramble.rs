//! Randomizations of base-2 digital sequences.
//!
//! `OwenNested` realizes nested uniform scrambling without storing the
//! permutation tree: the flip applied to digit `k` of a coordinate is one
//! bit of a keyed hash of (coordinate, the `k - 1` leading digits). Points
//! sharing a digit prefix therefore receive the same flip at the next digit,
//! which is exactly the nested structure. The first 32 digits are scrambled
//! this way and the remaining 21 bits of the double are filled from a hash of
//! the full 32-digit prefix, as a nested scramble of the trailing zeros.

use crate::seed::mix64;

const LOW_BITS: u32 = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrambleMode {
    None,
    DigitalShift,
    OwenNested,
}

impl std::str::FromStr for ScrambleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(ScrambleMode::None),
            "digital_shift" => Ok(ScrambleMode::DigitalShift),
            "owen_nested" => Ok(ScrambleMode::OwenNested),
            other => Err(format!(
                "unknown scramble mode `{other}` (expected none, digital_shift or owen_nested)"
            )),
        }
    }
}

impl std::fmt::Display for ScrambleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScrambleMode::None => "none",
            ScrambleMode::DigitalShift => "digital_shift",
            ScrambleMode::OwenNested => "owen_nested",
        })
    }
}

/// A randomization key. Identical key, coordinate and digits always give
/// the identical scrambled value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScrambleKey {
    pub seed: u64,
    pub mode: ScrambleMode,
    explicit_shift: Option<Vec<u32>>,
}

impl ScrambleKey {
    pub fn new(seed: u64, mode: ScrambleMode) -> Self {
        ScrambleKey {
            seed,
            mode,
            explicit_shift: None,
        }
    }

    pub fn none() -> Self {
        Self::new(0, ScrambleMode::None)
    }

    pub fn owen(seed: u64) -> Self {
        Self::new(seed, ScrambleMode::OwenNested)
    }

    /// Digital shift with caller-chosen 32-bit shifts per coordinate and no
    /// randomization of the trailing bits.
    pub fn explicit_shift(shifts: Vec<u32>) -> Self {
        ScrambleKey {
            seed: 0,
            mode: ScrambleMode::DigitalShift,
            explicit_shift: Some(shifts),
        }
    }

    /// Per-coordinate hash key; also the coordinate index for explicit shifts.
    #[inline]
    pub(crate) fn coordinate_seed(&self, coord: usize) -> u64 {
        match (&self.mode, &self.explicit_shift) {
            (ScrambleMode::DigitalShift, Some(_)) => coord as u64,
            _ => mix64(self.seed ^ mix64(coord as u64 + 1)),
        }
    }

    /// Map 32 digits to a double in [0, 1) carrying 53 bits.
    #[inline]
    pub(crate) fn apply(&self, coord_seed: u64, digits: u32) -> f64 {
        let bits53 = match self.mode {
            ScrambleMode::None => u64::from(digits) << LOW_BITS,
            ScrambleMode::DigitalShift => match &self.explicit_shift {
                Some(shifts) => u64::from(digits ^ shifts[coord_seed as usize]) << LOW_BITS,
                None => {
                    let h = mix64(coord_seed);
                    (u64::from(digits ^ (h >> 32) as u32) << LOW_BITS)
                        | (h & ((1 << LOW_BITS) - 1))
                }
            },
            ScrambleMode::OwenNested => {
                let hi = owen_scramble(coord_seed, digits);
                let tail = node_hash(coord_seed, (1u64 << 32) | u64::from(digits)) >> (64 - LOW_BITS);
                (u64::from(hi) << LOW_BITS) | tail
            }
        };
        bits53 as f64 * f64::powi(2.0, -53)
    }
}

#[inline]
fn node_hash(coord_seed: u64, node: u64) -> u64 {
    mix64(coord_seed ^ node.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Nested uniform scramble of 32 digits, most significant first.
///
/// The tree node at depth `k` is encoded as `(1 << k) | prefix`, where
/// `prefix` holds the `k` leading input digits; the sentinel bit makes the
/// encoding unique across depths.
#[inline]
pub fn owen_scramble(coord_seed: u64, digits: u32) -> u32 {
    let x = u64::from(digits);
    let mut flips = 0u32;
    for depth in 0..32u32 {
        let node = (1u64 << depth) | (x >> (32 - depth));
        let bit = (node_hash(coord_seed, node) >> 63) as u32;
        flips |= bit << (31 - depth);
    }
    digits ^ flips
}
