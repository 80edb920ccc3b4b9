use crate::lowdisc::{mc_points, scramble_digits, to_normals, NormalBatch, ScrambleKey, ScrambleMode, SobolGenerator};
use crate::seed::derive_seed;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Mc,
    Rqmc,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Mc => "mc",
            SamplerKind::Rqmc => "rqmc",
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(SamplerKind::Mc),
            "rqmc" => Ok(SamplerKind::Rqmc),
            other => Err(Error::Config(format!("unknown sampler `{other}` (expected mc or rqmc)"))),
        }
    }
}

/// Source of the standard-normal batches consumed by training.
///
/// Batch `(step, iteration)` must be a pure function of the sampler's seed
/// and those two indices.
pub trait BatchSampler {
    fn kind(&self) -> SamplerKind;
    fn normals(&mut self, step: usize, iteration: u64, m: usize, s: usize) -> Result<NormalBatch>;
}

/// Pseudo-random uniforms on a fresh substream per batch.
#[derive(Debug, Clone)]
pub struct McSampler {
    seed: u64,
}

impl McSampler {
    pub fn new(seed: u64) -> Self {
        McSampler { seed }
    }
}

impl BatchSampler for McSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Mc
    }

    fn normals(&mut self, step: usize, iteration: u64, m: usize, s: usize) -> Result<NormalBatch> {
        to_normals(&mc_points(derive_seed(self.seed, &[step as u64, iteration]), m, s))
    }
}

/// The first `m` Sobol' points under a fresh scramble key per batch. The
/// unscrambled digits are computed once per `(m, s)`.
#[derive(Debug, Clone)]
pub struct RqmcSampler {
    seed: u64,
    mode: ScrambleMode,
    cache: Option<(usize, usize, Vec<u32>)>,
}

impl RqmcSampler {
    pub fn new(seed: u64, mode: ScrambleMode) -> Self {
        RqmcSampler { seed, mode, cache: None }
    }

    fn digits(&mut self, m: usize, s: usize) -> Result<&[u32]> {
        let stale = !matches!(&self.cache, Some((cm, cs, _)) if *cm == m && *cs == s);
        if stale {
            let digits = SobolGenerator::new(s)?.next_digits(m)?;
            self.cache = Some((m, s, digits));
        }
        Ok(&self.cache.as_ref().expect("filled above").2)
    }
}

impl BatchSampler for RqmcSampler {
    fn kind(&self) -> SamplerKind {
        SamplerKind::Rqmc
    }

    fn normals(&mut self, step: usize, iteration: u64, m: usize, s: usize) -> Result<NormalBatch> {
        let key = ScrambleKey::new(derive_seed(self.seed, &[step as u64, iteration]), self.mode);
        let digits = self.digits(m, s)?;
        to_normals(&scramble_digits(digits, s, &key))
    }
}

pub fn make_sampler(kind: SamplerKind, mode: ScrambleMode, seed: u64) -> Box<dyn BatchSampler + Send> {
    match kind {
        SamplerKind::Mc => Box::new(McSampler::new(seed)),
        SamplerKind::Rqmc => Box::new(RqmcSampler::new(seed, mode)),
    }
}
