//! Deep backward dynamic programming.
//!
//! Starting from `U_N = g`, each step `i = N-1, ..., 0` fits a pair of
//! networks `(U_i, Z_i)` by minimizing
//! `E |U_{i+1}(X_{i+1}) - F(t_i, X_i, U_i(X_i), Z_i(X_i), dt_i, dW_i)|^2`
//! with `U_{i+1}` frozen.

mod sampler;
mod solution;

pub use sampler::{make_sampler, BatchSampler, McSampler, RqmcSampler, SamplerKind};
pub use solution::{StepRecord, TrainedSolution};

use crate::lowdisc::ScrambleMode;
use crate::net::{AdamConfig, Gradient, Mlp, MlpOptimizer, Mode, NetworkSpec};
use crate::problems::{simulate_slice, PathSlice, ProblemSpec, TimeGrid};
use crate::seed::{derive_seed, tag};
use crate::{Error, Result};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// One-step Euler map `F(t, x, y, z, h, dW) = y - f(t, x, y, z) h + z . dW`.
pub fn f_function(problem: &ProblemSpec, t: f64, x: &[f64], y: f64, z: &[f64], h: f64, dw: &[f64]) -> f64 {
    let zdw: f64 = z.iter().zip(dw).map(|(a, b)| a * b).sum();
    y - problem.driver(t, x, y, z) * h + zdw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    /// Adam iterations for step `N - 1`.
    pub iterations_first: u64,
    /// Adam iterations for every earlier step.
    pub iterations_rest: u64,
    pub lr_first: f64,
    pub lr_rest: f64,
    pub halve_every_first: u64,
    pub halve_every_rest: u64,
    /// Samples per Adam iteration.
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule {
            iterations_first: 50_000,
            iterations_rest: 5_000,
            lr_first: 0.01,
            lr_rest: 0.001,
            halve_every_first: 5_000,
            halve_every_rest: 500,
            batch_size: 1 << 12,
            weight_decay: 0.01,
        }
    }
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("training.{name} must be positive, got {v}")))
            }
        };
        positive("lr_first", self.lr_first)?;
        positive("lr_rest", self.lr_rest)?;
        positive("halve_every_first", self.halve_every_first as f64)?;
        positive("halve_every_rest", self.halve_every_rest as f64)?;
        positive("batch_size", self.batch_size as f64)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("training.weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    fn is_first(step: usize, grid: &TimeGrid) -> bool {
        step + 1 == grid.steps()
    }

    pub fn iterations(&self, step: usize, grid: &TimeGrid) -> u64 {
        if Self::is_first(step, grid) {
            self.iterations_first
        } else {
            self.iterations_rest
        }
    }

    pub fn adam(&self, step: usize, grid: &TimeGrid) -> AdamConfig {
        let (learning_rate, halve_every) = if Self::is_first(step, grid) {
            (self.lr_first, self.halve_every_first)
        } else {
            (self.lr_rest, self.halve_every_rest)
        };
        AdamConfig {
            learning_rate,
            halve_every,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Architecture shared by every `U_i` and `Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Hidden width; `None` means `d + 20`.
    pub width: Option<usize>,
    /// Number of affine maps.
    pub depth: usize,
    pub batch_norm: bool,
    /// Projection bound on `||theta||_inf`; `None` trains unconstrained.
    pub param_bound: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            width: None,
            depth: 4,
            batch_norm: true,
            param_bound: None,
        }
    }
}

impl NetworkConfig {
    pub fn width_for(&self, d: usize) -> usize {
        self.width.unwrap_or(d + 20)
    }

    /// Specs `(d, l, ..., l, 1)` and `(d, l, ..., l, d)`.
    pub fn specs(&self, d: usize) -> Result<(NetworkSpec, NetworkSpec)> {
        let w = self.width_for(d);
        Ok((NetworkSpec::mlp(d, w, self.depth, 1)?, NetworkSpec::mlp(d, w, self.depth, d)?))
    }
}

/// The pair `(U_i, Z_i)` for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNetworks {
    pub u: Mlp,
    pub z: Mlp,
}

impl StepNetworks {
    pub fn new(u: Mlp, z: Mlp) -> Result<Self> {
        let (su, sz) = (u.spec(), z.spec());
        let d = su.input_dim();
        if su.output_dim() != 1 || sz.input_dim() != d || sz.output_dim() != d {
            return Err(Error::Contract(format!(
                "step networks need shapes (d -> 1, d -> d), got ({:?}, {:?})",
                su.layer_sizes(),
                sz.layer_sizes()
            )));
        }
        if su.hidden_sizes() != sz.hidden_sizes() {
            return Err(Error::Contract("U and Z networks must share hidden sizes".into()));
        }
        Ok(StepNetworks { u, z })
    }

    pub fn xavier(d: usize, config: &NetworkConfig, seed: u64) -> Result<Self> {
        let (su, sz) = config.specs(d)?;
        Self::new(
            Mlp::xavier(&su, derive_seed(seed, &[0]), config.batch_norm),
            Mlp::xavier(&sz, derive_seed(seed, &[1]), config.batch_norm),
        )
    }

    pub fn dimension(&self) -> usize {
        self.u.spec().input_dim()
    }
}

/// The frozen value function at `t_{i+1}`.
#[derive(Debug, Clone, Copy)]
pub enum NextValue<'a> {
    Terminal,
    Network(&'a Mlp),
}

impl NextValue<'_> {
    pub fn evaluate(&self, problem: &ProblemSpec, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            NextValue::Terminal => Ok(problem.terminal_batch(x)),
            NextValue::Network(net) => Ok(net.predict(x)?.column(0).to_vec()),
        }
    }
}

/// Batch loss and its derivatives with respect to the network outputs.
#[derive(Debug, Clone)]
pub struct OutputLoss {
    pub loss: f64,
    /// `dL/dU(X_i)`, one entry per sample.
    pub d_y: Array2<f64>,
    /// `dL/dZ(X_i)`, shape `m x d`.
    pub d_z: Array2<f64>,
}

/// Mean of `(target - F)^2` over the batch given the output values of the
/// step networks; `target`, `y` and the rows of `z` are per-sample.
pub fn loss_from_outputs(
    problem: &ProblemSpec,
    slice: &PathSlice,
    t_i: f64,
    dt: f64,
    target: &[f64],
    y: &[f64],
    z: ArrayView2<'_, f64>,
) -> Result<OutputLoss> {
    let m = target.len();
    let d = problem.d;
    if y.len() != m || z.dim() != (m, d) || slice.x_i.dim() != (m, d) {
        return Err(Error::Contract("batch sizes of targets, outputs and paths differ".into()));
    }
    let x_i = slice.x_i.as_standard_layout();
    let dw = slice.dw.as_standard_layout();
    let z = z.as_standard_layout();
    let mut d_y = Array2::zeros((m, 1));
    let mut d_z = Array2::zeros((m, d));
    let mut fz = vec![0.0; d];
    let mut sum = 0.0;
    let scale = 2.0 / m as f64;
    for k in 0..m {
        let x = x_i.row(k);
        let x = x.as_slice().expect("standard layout");
        let zk = z.row(k);
        let zk = zk.as_slice().expect("standard layout");
        let dwk = dw.row(k);
        let dwk = dwk.as_slice().expect("standard layout");
        let (f, fy) = problem.driver_with_partials(t_i, x, y[k], zk, &mut fz);
        let zdw: f64 = zk.iter().zip(dwk).map(|(a, b)| a * b).sum();
        let h = target[k] - (y[k] - f * dt + zdw);
        sum += h * h;
        let g = scale * h;
        d_y[[k, 0]] = -g * (1.0 - fy * dt);
        for j in 0..d {
            d_z[[k, j]] = g * (fz[j] * dt - dwk[j]);
        }
    }
    let loss = sum / m as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("step loss is {loss}")));
    }
    Ok(OutputLoss { loss, d_y, d_z })
}

/// Step loss and gradients for both networks.
#[derive(Debug, Clone)]
pub struct StepLoss {
    pub loss: f64,
    pub grad_u: Gradient,
    pub grad_z: Gradient,
}

/// Training-mode loss of step `i` and its gradient with respect to the
/// parameters of `U_i` and `Z_i` only; `next` is read but never differentiated.
pub fn step_loss(
    problem: &ProblemSpec,
    next: NextValue<'_>,
    nets: &mut StepNetworks,
    slice: &PathSlice,
    t_i: f64,
    dt: f64,
) -> Result<StepLoss> {
    let target = next.evaluate(problem, slice.x_next.view())?;
    let (u_out, u_cache) = nets.u.forward(slice.x_i.view(), Mode::Train)?;
    let (z_out, z_cache) = nets.z.forward(slice.x_i.view(), Mode::Train)?;
    let y: Vec<f64> = u_out.column(0).to_vec();
    let out = loss_from_outputs(problem, slice, t_i, dt, &target, &y, z_out.view())?;
    Ok(StepLoss {
        loss: out.loss,
        grad_u: nets.u.backward(&u_cache, out.d_y.view())?,
        grad_z: nets.z.backward(&z_cache, out.d_z.view())?,
    })
}

/// Evaluation-mode step loss; leaves the networks untouched.
pub fn step_loss_value(
    problem: &ProblemSpec,
    next: NextValue<'_>,
    nets: &StepNetworks,
    slice: &PathSlice,
    t_i: f64,
    dt: f64,
) -> Result<f64> {
    let target = next.evaluate(problem, slice.x_next.view())?;
    let y = nets.u.predict(slice.x_i.view())?;
    let z = nets.z.predict(slice.x_i.view())?;
    let y: Vec<f64> = y.column(0).to_vec();
    Ok(loss_from_outputs(problem, slice, t_i, dt, &target, &y, z.view())?.loss)
}

/// Train `(U_i, Z_i)` from `init` with a fresh batch per Adam iteration.
pub fn train_step(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    step: usize,
    next: NextValue<'_>,
    init: StepNetworks,
    schedule: &TrainingSchedule,
    param_bound: Option<f64>,
    sampler: &mut dyn BatchSampler,
) -> Result<(StepNetworks, StepRecord)> {
    if step >= grid.steps() {
        return Err(Error::Contract(format!("step {step} outside a grid of {} steps", grid.steps())));
    }
    let mut nets = init;
    let (t_i, dt) = (grid.t(step), grid.dt(step));
    let adam = schedule.adam(step, grid);
    let mut opt_u = MlpOptimizer::new(&nets.u, adam, param_bound);
    let mut opt_z = MlpOptimizer::new(&nets.z, adam, param_bound);
    let iterations = schedule.iterations(step, grid);
    let mut record = StepRecord {
        step,
        iterations,
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
    };
    let abort = |iteration: u64, e: Error| Error::TrainingAbort {
        step,
        iteration,
        reason: e.to_string(),
    };
    for it in 0..iterations {
        let normals = sampler.normals(step, it, schedule.batch_size, 3 * problem.d)?;
        let slice = simulate_slice(problem, &normals, t_i, dt)?;
        let out = step_loss(problem, next, &mut nets, &slice, t_i, dt).map_err(|e| abort(it, e))?;
        if it == 0 {
            record.initial_loss = out.loss;
        }
        record.final_loss = out.loss;
        nets.u.apply_gradient(&out.grad_u, &mut opt_u).map_err(|e| abort(it, e))?;
        nets.z.apply_gradient(&out.grad_z, &mut opt_z).map_err(|e| abort(it, e))?;
    }
    Ok((nets, record))
}

/// Everything besides the problem that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub schedule: TrainingSchedule,
    pub network: NetworkConfig,
    pub sampler: SamplerKind,
    pub scramble: ScrambleMode,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            schedule: TrainingSchedule::default(),
            network: NetworkConfig::default(),
            sampler: SamplerKind::Rqmc,
            scramble: ScrambleMode::OwenNested,
        }
    }
}

/// Run the backward scheme with the sampler named in `settings`.
pub fn solve(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    settings: &SolverSettings,
    master_seed: u64,
) -> Result<TrainedSolution> {
    let mut sampler = make_sampler(settings.sampler, settings.scramble, derive_seed(master_seed, &[tag::SAMPLER]));
    solve_with_sampler(problem, grid, settings, sampler.as_mut(), master_seed)
}

/// Run the backward scheme drawing every batch from `sampler`.
pub fn solve_with_sampler(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    settings: &SolverSettings,
    sampler: &mut dyn BatchSampler,
    master_seed: u64,
) -> Result<TrainedSolution> {
    settings.schedule.validate()?;
    if (grid.horizon() - problem.horizon).abs() > 1e-12 * problem.horizon {
        return Err(Error::Config(format!(
            "time grid ends at {} but the problem horizon is {}",
            grid.horizon(),
            problem.horizon
        )));
    }
    let n = grid.steps();
    let mut trained: Vec<Option<StepNetworks>> = vec![None; n];
    let mut records = Vec::with_capacity(n);
    for i in (0..n).rev() {
        // Warm start from the step just trained; Xavier only at i = N - 1.
        let later = trained.get(i + 1).cloned().flatten();
        let (init, next) = match &later {
            Some(later) => (later.clone(), NextValue::Network(&later.u)),
            None => (
                StepNetworks::xavier(problem.d, &settings.network, derive_seed(master_seed, &[tag::INIT]))?,
                NextValue::Terminal,
            ),
        };
        let (nets, record) = train_step(
            problem,
            grid,
            i,
            next,
            init,
            &settings.schedule,
            settings.network.param_bound,
            sampler,
        )?;
        trained[i] = Some(nets);
        records.push(record);
    }
    records.reverse();
    Ok(TrainedSolution {
        problem: problem.clone(),
        grid: grid.clone(),
        settings: settings.clone(),
        master_seed,
        steps: trained.into_iter().map(|s| s.expect("every step trained")).collect(),
        records,
    })
}

/// Row-wise prediction of `U` as a plain vector.
pub fn predict_values(net: &Mlp, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(net.predict(x)?.index_axis(Axis(1), 0).to_vec())
}

#[cfg(test)]
mod tests;
