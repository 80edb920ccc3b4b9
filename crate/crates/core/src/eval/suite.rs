use super::{evaluate_solution, ErrorReport, EvalSet};
use crate::dbdp::{solve, SamplerKind, SolverSettings};
use crate::problems::{ProblemSpec, ReferenceConfig, TimeGrid};
use crate::seed::{derive_seed, tag};
use crate::{Error, Result};
use rayon::prelude::*;

/// Sample mean and `n - 1` standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// A table experiment: `n_runs` independent solves for every
/// `(batch size, sampler)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub problem: ProblemSpec,
    pub steps: usize,
    pub batch_sizes: Vec<usize>,
    pub samplers: Vec<SamplerKind>,
    pub n_runs: usize,
    /// Shared settings; the batch size is replaced per cell.
    pub settings: SolverSettings,
    pub master_seed: u64,
    pub eval_points: usize,
    pub reference: ReferenceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteCell {
    pub m: usize,
    pub sampler: SamplerKind,
}

#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub cell: SuiteCell,
    pub n_runs: usize,
    /// Relative L2 error of every completed run, in run order.
    pub errors: Vec<f64>,
    pub failures: Vec<String>,
    pub mean: f64,
    pub std: f64,
    pub best: Option<ErrorReport>,
    pub worst: Option<ErrorReport>,
}

impl SuiteRow {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seed of run `run` in the cell with batch size `m`. Both samplers share
/// it, so they start from the same initialization.
pub fn run_seed(master: u64, m: usize, run: usize) -> u64 {
    derive_seed(master, &[tag::RUN, m as u64, run as u64])
}

/// Train and evaluate every run of every cell. Runs execute on the current
/// rayon pool; results do not depend on its size.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<SuiteRow>> {
    if config.n_runs == 0 || config.batch_sizes.is_empty() || config.samplers.is_empty() {
        return Err(Error::Config("suite needs n_runs >= 1, batch sizes and samplers".into()));
    }
    let grid = TimeGrid::uniform(config.problem.horizon, config.steps)?;
    let set = EvalSet::build(
        &config.problem,
        config.eval_points,
        derive_seed(config.master_seed, &[tag::EVAL]),
        &config.reference,
    )?;
    let cells: Vec<SuiteCell> = config
        .batch_sizes
        .iter()
        .flat_map(|&m| config.samplers.iter().map(move |&sampler| SuiteCell { m, sampler }))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..config.n_runs).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Result<ErrorReport>> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cell = cells[c];
            let mut settings = config.settings.clone();
            settings.schedule.batch_size = cell.m;
            settings.sampler = cell.sampler;
            let solution = solve(&config.problem, &grid, &settings, run_seed(config.master_seed, cell.m, r))?;
            evaluate_solution(&solution, &set)
        })
        .collect();
    let mut outcomes = outcomes.into_iter();
    let rows = cells
        .into_iter()
        .map(|cell| {
            let mut reports = Vec::new();
            let mut failures = Vec::new();
            for (r, outcome) in outcomes.by_ref().take(config.n_runs).enumerate() {
                match outcome {
                    Ok(report) => reports.push(report),
                    Err(e) => failures.push(format!("run {r}: {e}")),
                }
            }
            let errors: Vec<f64> = reports.iter().map(|r| r.relative_l2).collect();
            let (mean, std) = mean_std(&errors);
            let by_error = |a: &&ErrorReport, b: &&ErrorReport| a.relative_l2.total_cmp(&b.relative_l2);
            SuiteRow {
                cell,
                n_runs: config.n_runs,
                best: reports.iter().min_by(by_error).cloned(),
                worst: reports.iter().max_by(by_error).cloned(),
                errors,
                failures,
                mean,
                std,
            }
        })
        .collect();
    Ok(rows)
}
