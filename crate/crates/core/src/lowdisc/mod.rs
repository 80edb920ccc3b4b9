//! Uniform and Gaussian sample batches: plain Monte Carlo, scrambled
//! Sobol' points and the inverse-normal transform between them.

mod normal;
mod scramble;
mod sobol;

pub use normal::{inverse_normal_cdf, normal_cdf, normal_pdf};
pub use scramble::{owen_scramble, ScrambleKey, ScrambleMode};
pub use sobol::{scramble_digits, sobol_points, DirectionTable, PolynomialEntry, SobolGenerator};

use crate::{Error, Result};
use ndarray::{Array2, ArrayView2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest value a uniform sample may take; the largest is `1 - UNIT_EPS`.
pub const UNIT_EPS: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

/// `m x s` uniforms, every entry in `[2^-53, 1 - 2^-53]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch(Array2<f64>);

impl PointBatch {
    /// Wrap values, clamping each into `[2^-53, 1 - 2^-53]`.
    pub fn from_clamped(mut values: Array2<f64>) -> Self {
        values.mapv_inplace(|v| v.clamp(UNIT_EPS, 1.0 - UNIT_EPS));
        PointBatch(values)
    }

    /// Wrap values that must already lie strictly inside (0, 1).
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("uniform sample {v} not in (0, 1)")));
        }
        Ok(PointBatch(values))
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn s(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `m x s` standard normal samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBatch(Array2<f64>);

impl NormalBatch {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("normal batch contains non-finite entries".into()));
        }
        Ok(NormalBatch(values))
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn s(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// Uniform double from the top 53 bits of a 64-bit word, clamped.
#[inline]
pub(crate) fn unit_from_bits(word: u64) -> f64 {
    ((word >> 11) as f64 * UNIT_EPS).max(UNIT_EPS)
}

/// `m x s` pseudo-random uniforms from a ChaCha8 stream keyed by `seed`.
pub fn mc_points(seed: u64, m: usize, s: usize) -> PointBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_simple_fn((m, s), || unit_from_bits(rng.next_u64()));
    PointBatch(values)
}

/// Componentwise inverse normal CDF.
pub fn to_normals(batch: &PointBatch) -> Result<NormalBatch> {
    let mut out = batch.0.clone();
    for v in out.iter_mut() {
        *v = inverse_normal_cdf(*v)?;
    }
    Ok(NormalBatch(out))
}
