//! Benchmark nonlinear parabolic PDEs, their exact forward simulation and
//! reference solutions.
//!
//! Every problem has the form `u_t + A u + f(t, x, u, Sigma^T D_x u) = 0`,
//! `u(T, .) = g`, with `A = 1/2 Tr(Sigma Sigma^T D^2) + M . D` and diagonal
//! coefficients:
//!
//! | kind | `M(x)`   | `Sigma(x)`          | `g`            |
//! |------|----------|---------------------|----------------|
//! | heat | `mu 1`   | `sigma I`           | `cos(sum x)`   |
//! | hjb  | `0`      | `sqrt(2) I`         | `|x|^(1/2)`    |
//! | bs1  | `mu x`   | `sigma diag(x)`     | `cos(sum x)`   |
//! | bs2  | `mu x`   | `sigma diag(x)`     | `Phi(sum x)`   |

use crate::lowdisc::{normal_cdf, normal_pdf, NormalBatch};
use crate::seed::derive_seed;
use crate::{Error, Result};
use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Heat,
    Hjb,
    Bs1,
    Bs2,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [ProblemKind::Heat, ProblemKind::Hjb, ProblemKind::Bs1, ProblemKind::Bs2];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Heat => "heat",
            ProblemKind::Hjb => "hjb",
            ProblemKind::Bs1 => "bs1",
            ProblemKind::Bs2 => "bs2",
        }
    }

    fn geometric(self) -> bool {
        matches!(self, ProblemKind::Bs1 | ProblemKind::Bs2)
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}` (expected heat, hjb, bs1 or bs2)")))
    }
}

/// One PDE instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub d: usize,
    pub horizon: f64,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Default `(a, b, mu, sigma)` for a problem in dimension `d`.
pub fn default_coefficients(kind: ProblemKind, d: usize) -> (f64, f64, f64, f64) {
    let d = d as f64;
    match kind {
        ProblemKind::Hjb => (0.0, 1.0, 0.0, SQRT_2),
        _ => (-0.5, 0.5, 0.2 / d, 1.0 / d.sqrt()),
    }
}

impl ProblemSpec {
    /// Problem with the default domain and coefficients.
    pub fn new(kind: ProblemKind, d: usize, horizon: f64) -> Result<Self> {
        let (a, b, mu, sigma) = default_coefficients(kind, d.max(1));
        Self::with_coefficients(kind, d, horizon, a, b, mu, sigma)
    }

    pub fn with_coefficients(
        kind: ProblemKind,
        d: usize,
        horizon: f64,
        a: f64,
        b: f64,
        mu: f64,
        sigma: f64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("dimension d must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon T must be positive, got {horizon}")));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Config(format!("domain needs a < b, got [{a}, {b}]")));
        }
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::Config("mu and sigma must be finite".into()));
        }
        if kind == ProblemKind::Hjb && (mu != 0.0 || sigma != SQRT_2) {
            return Err(Error::Config(
                "the hjb problem is defined with mu = 0 and sigma = sqrt(2)".into(),
            ));
        }
        Ok(ProblemSpec {
            kind,
            d,
            horizon,
            a,
            b,
            mu,
            sigma,
        })
    }

    pub fn has_closed_form(&self) -> bool {
        self.kind != ProblemKind::Hjb
    }

    /// Drift `M(x)`, written into `out`.
    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = if self.kind.geometric() { self.mu * xi } else { self.mu };
        }
    }

    /// Diagonal of `Sigma(x)`, written into `out`.
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = if self.kind.geometric() { self.sigma * xi } else { self.sigma };
        }
    }

    /// Nonlinear term `f(t, x, y, z)`.
    pub fn driver(&self, t: f64, x: &[f64], y: f64, z: &[f64]) -> f64 {
        let mut scratch = vec![0.0; z.len()];
        self.driver_with_partials(t, x, y, z, &mut scratch).0
    }

    /// `f(t, x, y, z)` together with `df/dy`; `df/dz` is written to `dz`.
    pub fn driver_with_partials(&self, t: f64, x: &[f64], y: f64, z: &[f64], dz: &mut [f64]) -> (f64, f64) {
        if self.kind == ProblemKind::Hjb {
            let mut f = 0.0;
            for (g, &zi) in dz.iter_mut().zip(z) {
                f -= 0.5 * zi * zi;
                *g = -zi;
            }
            return (f, 0.0);
        }
        let d = self.d as f64;
        let (mu, sigma) = (self.mu, self.sigma);
        let tau = self.horizon - t;
        let e1 = (0.5 * tau).exp();
        let e2 = tau.exp();
        let xbar: f64 = x.iter().sum();
        let (sin, cos) = xbar.sin_cos();
        let linear_and_cancel = match self.kind {
            ProblemKind::Heat => {
                (0.5 * (1.0 + sigma * sigma * d) * cos + mu * d * sin) * e1
                    - 0.5 * (sigma * d.sqrt() * sin * cos * e2).powi(2)
            }
            ProblemKind::Bs1 => {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                (0.5 * cos + mu * xbar * sin + 0.5 * sigma * sigma * sq * cos) * e1
                    - (sigma * xbar * cos * sin * e2).powi(2) / (2.0 * d)
            }
            ProblemKind::Bs2 => {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                let (cdf, pdf) = (normal_cdf(xbar), normal_pdf(xbar));
                (0.5 * cdf - mu * xbar * pdf + 0.5 * sigma * sigma * xbar * sq * pdf) * e1
                    - (sigma * xbar * pdf * cdf * e2).powi(2) / (2.0 * d)
            }
            ProblemKind::Hjb => unreachable!(),
        };
        // (1 / 2d) (y (1 . z))^2
        let zsum: f64 = z.iter().sum();
        let f = linear_and_cancel + (y * zsum).powi(2) / (2.0 * d);
        let dfdy = y * zsum * zsum / d;
        let dfdz = y * y * zsum / d;
        dz.iter_mut().for_each(|g| *g = dfdz);
        (f, dfdy)
    }

    /// Terminal condition `g(x)`.
    pub fn terminal(&self, x: &[f64]) -> f64 {
        let xbar: f64 = x.iter().sum();
        match self.kind {
            ProblemKind::Heat | ProblemKind::Bs1 => xbar.cos(),
            ProblemKind::Bs2 => normal_cdf(xbar),
            ProblemKind::Hjb => x.iter().map(|v| v * v).sum::<f64>().sqrt().sqrt(),
        }
    }

    /// `g` on every row of `x`.
    pub fn terminal_batch(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.axis_iter(Axis(0))
            .map(|row| self.terminal(row.as_slice().expect("row-major batch")))
            .collect()
    }

    /// Closed-form `u(t, x)`; `None` for hjb.
    pub fn exact_solution(&self, t: f64, x: &[f64]) -> Option<f64> {
        let e1 = (0.5 * (self.horizon - t)).exp();
        let xbar: f64 = x.iter().sum();
        match self.kind {
            ProblemKind::Heat | ProblemKind::Bs1 => Some(xbar.cos() * e1),
            ProblemKind::Bs2 => Some(normal_cdf(xbar) * e1),
            ProblemKind::Hjb => None,
        }
    }

    /// Closed-form `Sigma^T D_x u(t, x)`; `None` for hjb.
    pub fn exact_z(&self, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        let e1 = (0.5 * (self.horizon - t)).exp();
        let xbar: f64 = x.iter().sum();
        let du = match self.kind {
            ProblemKind::Heat | ProblemKind::Bs1 => -xbar.sin() * e1,
            ProblemKind::Bs2 => normal_pdf(xbar) * e1,
            ProblemKind::Hjb => return None,
        };
        let mut diag = vec![0.0; self.d];
        self.diffusion(x, &mut diag);
        Some(diag.into_iter().map(|s| s * du).collect())
    }
}

/// Time partition `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("number of time steps N must be at least 1".into()));
        }
        let mut nodes: Vec<f64> = (0..steps).map(|i| horizon * i as f64 / steps as f64).collect();
        nodes.push(horizon);
        Self::from_nodes(nodes)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Config("time grid must start at 0 and have at least one step".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("time grid must be strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }

    pub fn mesh(&self) -> f64 {
        (0..self.steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
}

/// States of one batch of paths over `[t_i, t_{i+1}]`.
#[derive(Debug, Clone)]
pub struct PathSlice {
    pub eta: Array2<f64>,
    pub x_i: Array2<f64>,
    pub x_next: Array2<f64>,
    pub dw: Array2<f64>,
}

/// Split a `3d`-column normal batch into the initial point (uniform on
/// `[a, b]^d` via `Phi`), `W_{t_i}` and the increment `dW`.
pub fn transform_normals(
    w: ArrayView2<'_, f64>,
    d: usize,
    a: f64,
    b: f64,
    t_i: f64,
    dt: f64,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    if w.ncols() != 3 * d {
        return Err(Error::Contract(format!(
            "normal batch has {} columns, expected 3d = {}",
            w.ncols(),
            3 * d
        )));
    }
    let eta = w
        .slice(s![.., 0..d])
        .mapv(|v| ((b - a) * normal_cdf(v) + a).clamp(a, b));
    let w_t = w.slice(s![.., d..2 * d]).mapv(|v| t_i.sqrt() * v);
    let dw = w.slice(s![.., 2 * d..3 * d]).mapv(|v| dt.sqrt() * v);
    Ok((eta, w_t, dw))
}

/// Exact-in-law states at `t_i` and `t_{i+1}`.
pub fn simulate_slice(problem: &ProblemSpec, normals: &NormalBatch, t_i: f64, dt: f64) -> Result<PathSlice> {
    let (eta, w_t, dw) = transform_normals(normals.values(), problem.d, problem.a, problem.b, t_i, dt)?;
    let (mu, sigma) = (problem.mu, problem.sigma);
    let (x_i, x_next) = if problem.kind.geometric() {
        let drift = mu - 0.5 * sigma * sigma;
        let mut x_i = eta.clone();
        Zip::from(&mut x_i)
            .and(&w_t)
            .for_each(|x, &w| *x *= (drift * t_i + sigma * w).exp());
        let mut x_next = x_i.clone();
        Zip::from(&mut x_next)
            .and(&dw)
            .for_each(|x, &w| *x *= (drift * dt + sigma * w).exp());
        (x_i, x_next)
    } else {
        let mut x_i = eta.clone();
        Zip::from(&mut x_i).and(&w_t).for_each(|x, &w| *x += mu * t_i + sigma * w);
        let mut x_next = x_i.clone();
        Zip::from(&mut x_next).and(&dw).for_each(|x, &w| *x += mu * dt + sigma * w);
        (x_i, x_next)
    };
    Ok(PathSlice { eta, x_i, x_next, dw })
}

/// Monte Carlo settings for the hjb reference solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            samples: 1 << 17,
            seed: 0,
        }
    }
}

/// A reference value of `u(t, x)` and its Monte Carlo standard error
/// (zero for closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceValue {
    pub value: f64,
    pub std_error: f64,
}

/// `u(t, x)`: closed form, or for hjb the Cole–Hopf representation
/// `-ln E[exp(-g(x + sqrt(2) W_{T-t}))]` estimated by Monte Carlo.
pub fn reference_solution(problem: &ProblemSpec, t: f64, x: &[f64], mc: &ReferenceConfig) -> Result<ReferenceValue> {
    if let Some(value) = problem.exact_solution(t, x) {
        return Ok(ReferenceValue { value, std_error: 0.0 });
    }
    let tau = problem.horizon - t;
    if tau <= 0.0 {
        return Ok(ReferenceValue {
            value: problem.terminal(x),
            std_error: 0.0,
        });
    }
    if mc.samples < 2 {
        return Err(Error::Config("reference Monte Carlo needs at least 2 samples".into()));
    }
    let scale = (2.0 * tau).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let mut point = vec![0.0; x.len()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..mc.samples {
        for (p, &xi) in point.iter_mut().zip(x) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = xi + scale * z;
        }
        let e = (-problem.terminal(&point)).exp();
        sum += e;
        sum_sq += e * e;
    }
    let n = mc.samples as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
    Ok(ReferenceValue {
        value: -mean.ln(),
        std_error: (var / n).sqrt() / mean,
    })
}

/// Reference values on every row of `xs`; row `k` uses the substream
/// `derive_seed(mc.seed, [k])`, so results do not depend on threading.
pub fn reference_batch(
    problem: &ProblemSpec,
    t: f64,
    xs: ArrayView2<'_, f64>,
    mc: &ReferenceConfig,
) -> Result<Vec<ReferenceValue>> {
    let rows: Vec<Vec<f64>> = xs.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    rows.par_iter()
        .enumerate()
        .map(|(k, x)| {
            let cfg = ReferenceConfig {
                samples: mc.samples,
                seed: derive_seed(mc.seed, &[k as u64]),
            };
            reference_solution(problem, t, x, &cfg)
        })
        .collect()
}

/// Finite-difference value of `u_t + A u + f(t, x, u, Sigma^T D u)` for the
/// closed-form solution, using central differences with step `h`.
pub fn pde_residual(problem: &ProblemSpec, t: f64, x: &[f64], h: f64) -> Result<f64> {
    pde_residual_with(problem, t, x, h, |t, x, y, z| problem.driver(t, x, y, z))
}

/// As [`pde_residual`] with a caller-supplied driver.
pub fn pde_residual_with<F>(problem: &ProblemSpec, t: f64, x: &[f64], h: f64, driver: F) -> Result<f64>
where
    F: Fn(f64, &[f64], f64, &[f64]) -> f64,
{
    if !problem.has_closed_form() {
        return Err(Error::Config(format!(
            "problem {} has no closed-form solution to differentiate",
            problem.kind
        )));
    }
    let u = |t: f64, x: &[f64]| problem.exact_solution(t, x).expect("closed form");
    let d = x.len();
    let u0 = u(t, x);
    let u_t = (u(t + h, x) - u(t - h, x)) / (2.0 * h);
    let mut drift = vec![0.0; d];
    let mut diff = vec![0.0; d];
    problem.drift(x, &mut drift);
    problem.diffusion(x, &mut diff);
    let mut generator = 0.0;
    let mut z = vec![0.0; d];
    let mut shifted = x.to_vec();
    for i in 0..d {
        shifted[i] = x[i] + h;
        let up = u(t, &shifted);
        shifted[i] = x[i] - h;
        let down = u(t, &shifted);
        shifted[i] = x[i];
        let du = (up - down) / (2.0 * h);
        let d2u = (up - 2.0 * u0 + down) / (h * h);
        generator += 0.5 * diff[i] * diff[i] * d2u + drift[i] * du;
        z[i] = diff[i] * du;
    }
    Ok(u_t + generator + driver(t, x, u0, &z))
}
