use crate::dbdp::{step_loss_value, NextValue, SamplerKind, StepNetworks};
use crate::lowdisc::{mc_points, scramble_digits, to_normals, PointBatch, ScrambleKey, ScrambleMode, SobolGenerator};
use crate::net::Mlp;
use crate::problems::{simulate_slice, ProblemSpec};
use crate::seed::{derive_seed, tag};
use crate::{Error, Result};

/// A function on `(0, 1)^s` whose batch mean is an empirical risk.
pub trait Integrand: Sync {
    fn dimension(&self) -> usize;
    fn batch_mean(&self, points: &PointBatch) -> Result<f64>;
}

/// The step loss of fixed networks, seen as an integrand of the `3d`
/// uniforms that drive one path slice.
pub struct StepLossIntegrand {
    pub problem: ProblemSpec,
    pub nets: StepNetworks,
    /// `None` uses the terminal condition as the target.
    pub next: Option<Mlp>,
    pub t_i: f64,
    pub dt: f64,
}

impl Integrand for StepLossIntegrand {
    fn dimension(&self) -> usize {
        3 * self.problem.d
    }

    fn batch_mean(&self, points: &PointBatch) -> Result<f64> {
        let normals = to_normals(points)?;
        let slice = simulate_slice(&self.problem, &normals, self.t_i, self.dt)?;
        let next = match &self.next {
            Some(net) => NextValue::Network(net),
            None => NextValue::Terminal,
        };
        step_loss_value(&self.problem, next, &self.nets, &slice, self.t_i, self.dt)
    }
}

/// `prod_j (1 + (u_j - 1/2))`, exact integral 1.
pub struct GenzProduct {
    pub dim: usize,
}

impl Integrand for GenzProduct {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn batch_mean(&self, points: &PointBatch) -> Result<f64> {
        let v = points.values();
        let sum: f64 = v.rows().into_iter().map(|r| r.iter().map(|u| 0.5 + u).product::<f64>()).sum();
        Ok(sum / v.nrows() as f64)
    }
}

pub struct ConstantIntegrand {
    pub dim: usize,
    pub value: f64,
}

impl Integrand for ConstantIntegrand {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn batch_mean(&self, _: &PointBatch) -> Result<f64> {
        Ok(self.value)
    }
}

/// How the reference risk is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    /// Owen-scrambled Sobol' estimate with this many points.
    Rqmc(usize),
    Exact(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProbeResult {
    pub sampler: SamplerKind,
    pub m_values: Vec<usize>,
    pub rmse_values: Vec<f64>,
    /// `None` when every RMSE is zero (constant integrand).
    pub fitted_slope: Option<f64>,
    pub oracle_value: f64,
}

const ORACLE_CHUNK: usize = 1 << 16;

fn oracle_value(integrand: &dyn Integrand, oracle: Oracle, seed: u64) -> Result<f64> {
    let m = match oracle {
        Oracle::Exact(v) => return Ok(v),
        Oracle::Rqmc(m) => m,
    };
    if m == 0 {
        return Err(Error::Config("oracle needs at least one point".into()));
    }
    let s = integrand.dimension();
    let key = ScrambleKey::new(derive_seed(seed, &[tag::ORACLE]), ScrambleMode::OwenNested);
    let mut gen = SobolGenerator::new(s)?;
    let (mut total, mut done) = (0.0, 0usize);
    while done < m {
        let chunk = ORACLE_CHUNK.min(m - done);
        let digits = gen.next_digits(chunk)?;
        total += integrand.batch_mean(&scramble_digits(&digits, s, &key))? * chunk as f64;
        done += chunk;
    }
    Ok(total / m as f64)
}

fn probe_points(sampler: SamplerKind, s: usize, m: usize, seed: u64, digits: &[u32]) -> PointBatch {
    match sampler {
        SamplerKind::Mc => mc_points(seed, m, s),
        SamplerKind::Rqmc => scramble_digits(digits, s, &ScrambleKey::new(seed, ScrambleMode::OwenNested)),
    }
}

/// RMSE of the `m`-point empirical risk around the oracle risk, over
/// `replications` independent randomizations, for every `m` in `m_values`.
///
/// This is a fixed-parameter proxy for the generalization error: it measures
/// the quadrature error of the risk at one `theta`, not its supremum.
pub fn quadrature_rate_probe(
    integrand: &dyn Integrand,
    sampler: SamplerKind,
    m_values: &[usize],
    replications: usize,
    oracle: Oracle,
    seed: u64,
) -> Result<RateProbeResult> {
    if replications == 0 || m_values.is_empty() {
        return Err(Error::Config("rate probe needs replications >= 1 and a non-empty m list".into()));
    }
    if m_values.iter().any(|&m| m == 0 || !m.is_power_of_two()) || m_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("rate probe m values must be increasing powers of two".into()));
    }
    let reference = oracle_value(integrand, oracle, seed)?;
    let s = integrand.dimension();
    let mut rmse_values = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let digits = match sampler {
            SamplerKind::Rqmc => SobolGenerator::new(s)?.next_digits(m)?,
            SamplerKind::Mc => Vec::new(),
        };
        let mut sq = 0.0;
        for r in 0..replications {
            let key = derive_seed(seed, &[tag::PROBE, m as u64, r as u64]);
            let est = integrand.batch_mean(&probe_points(sampler, s, m, key, &digits))?;
            sq += (est - reference) * (est - reference);
        }
        rmse_values.push((sq / replications as f64).sqrt());
    }
    let fitted_slope = if rmse_values.iter().all(|&v| v > 0.0) && m_values.len() >= 2 {
        Some(fit_rate(m_values, &rmse_values)?)
    } else {
        None
    };
    Ok(RateProbeResult {
        sampler,
        m_values: m_values.to_vec(),
        rmse_values,
        fitted_slope,
        oracle_value: reference,
    })
}

/// Least-squares slope of `log2 rmse` against `log2 m`.
pub fn fit_rate(m_values: &[usize], rmse_values: &[f64]) -> Result<f64> {
    if m_values.len() != rmse_values.len() || m_values.len() < 2 {
        return Err(Error::Contract("fit_rate needs matching lists of at least two points".into()));
    }
    if let Some(bad) = rmse_values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Contract(format!("fit_rate needs positive rmse values, got {bad}")));
    }
    let xs: Vec<f64> = m_values.iter().map(|&m| (m as f64).log2()).collect();
    let ys: Vec<f64> = rmse_values.iter().map(|v| v.log2()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Contract("fit_rate needs distinct m values".into()));
    }
    Ok(sxy / sxx)
}
