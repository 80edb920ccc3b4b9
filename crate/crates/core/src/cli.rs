//! `dbdp` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use crate::config::{fingerprint_text, ExperimentConfig, ProbeMode, Resolved};
use crate::dbdp::{solve, NetworkConfig, SamplerKind, SolverSettings, StepNetworks, TrainedSolution, TrainingSchedule};
use crate::eval::{
    evaluate_solution, quadrature_rate_probe, run_suite, write_histogram_csv, write_rate_csv, write_report_csv,
    write_suite_csv, ConstantIntegrand, CsvHeader, ErrorReport, EvalSet, GenzProduct, Integrand, Oracle,
    RateProbeResult, StepLossIntegrand, SuiteConfig, SuiteRow, DEFAULT_EVAL_POINTS,
};
use crate::lowdisc::ScrambleMode;
use crate::problems::{reference_batch, ProblemKind, ProblemSpec, ReferenceConfig, TimeGrid};
use crate::seed::{derive_seed, tag};
use crate::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Evaluation points for problems without a closed-form solution.
pub const DEFAULT_REFERENCE_POINTS: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "dbdp", version, about = "Deep backward dynamic programming with MC and RQMC sampling")]
pub struct Cli {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one solution and write its checkpoints and manifest.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `run.output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (default: `run.master_seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Relative L2 error and error histogram of a trained solution.
    Evaluate {
        /// Directory written by `solve`.
        solution: PathBuf,
        /// Evaluation points (default 65536; 256 for hjb).
        #[arg(long)]
        m_eval: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the solution directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte Carlo samples per hjb reference value.
        #[arg(long, default_value_t = 1 << 17)]
        reference_samples: usize,
        /// Evaluate the reference solution itself instead of the network.
        #[arg(long)]
        exact_baseline: bool,
    },
    /// Quadrature-error rates of MC and RQMC on a fixed integrand.
    RateProbe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `rate_probe.mode`.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Mean and standard deviation of the error over independent runs.
    ReproduceTable {
        #[arg(value_enum)]
        table: TableId,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableId {
    Heat,
    Hjb,
    Bs1,
    Bs2,
}

impl TableId {
    pub fn kind(self) -> ProblemKind {
        match self {
            TableId::Heat => ProblemKind::Heat,
            TableId::Hjb => ProblemKind::Hjb,
            TableId::Bs1 => ProblemKind::Bs1,
            TableId::Bs2 => ProblemKind::Bs2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Network,
    Genz,
    Constant,
}

impl From<ModeArg> for ProbeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Network => ProbeMode::Network,
            ModeArg::Genz => ProbeMode::Genz,
            ModeArg::Constant => ProbeMode::Constant,
        }
    }
}

/// Suites run by `reproduce-table`.
///
/// Desk scale: d = 10, N = 2, m = 2^12, (4000, 1500) iterations with the
/// halving periods scaled to (400, 150), T = 0.25; 4 runs per sampler, or 2
/// for hjb, which is evaluated on a 256-point subset. Full scale: d in {20, 50}, m in {2^12, 2^14, 2^16},
/// 8 runs, T = 1, N = 32 and the 50000 / 5000 iteration schedule.
pub fn table_preset(kind: ProblemKind, scale: Scale, master_seed: u64) -> Result<Vec<SuiteConfig>> {
    let samplers = vec![SamplerKind::Mc, SamplerKind::Rqmc];
    let reference = ReferenceConfig {
        samples: 1 << 17,
        seed: derive_seed(master_seed, &[tag::REFERENCE]),
    };
    let eval_points = if kind == ProblemKind::Hjb {
        DEFAULT_REFERENCE_POINTS
    } else {
        DEFAULT_EVAL_POINTS
    };
    let settings = |schedule: TrainingSchedule| SolverSettings {
        schedule,
        network: NetworkConfig::default(),
        sampler: SamplerKind::Rqmc,
        scramble: ScrambleMode::OwenNested,
    };
    match scale {
        Scale::Desk => {
            let n_runs = if kind == ProblemKind::Hjb { 2 } else { 4 };
            Ok(vec![SuiteConfig {
                problem: ProblemSpec::new(kind, 10, 0.25)?,
                steps: 2,
                batch_sizes: vec![1 << 12],
                samplers,
                n_runs,
                settings: settings(TrainingSchedule {
                    iterations_first: 4000,
                    iterations_rest: 1500,
                    halve_every_first: 400,
                    halve_every_rest: 150,
                    ..TrainingSchedule::default()
                }),
                master_seed,
                eval_points,
                reference,
            }])
        }
        Scale::Full => [20, 50]
            .into_iter()
            .map(|d| {
                Ok(SuiteConfig {
                    problem: ProblemSpec::new(kind, d, 1.0)?,
                    steps: 32,
                    batch_sizes: vec![1 << 12, 1 << 14, 1 << 16],
                    samplers: samplers.clone(),
                    n_runs: 8,
                    settings: settings(TrainingSchedule::default()),
                    master_seed,
                    eval_points,
                    reference,
                })
            })
            .collect(),
    }
}

fn describe_suite(s: &SuiteConfig) -> Vec<String> {
    let sch = &s.settings.schedule;
    let net = &s.settings.network;
    let p = &s.problem;
    vec![
        format!(
            "problem = {} d = {} T = {} N = {} a = {} b = {} mu = {} sigma = {}",
            p.kind, p.d, p.horizon, s.steps, p.a, p.b, p.mu, p.sigma
        ),
        format!(
            "batch_sizes = {:?} samplers = {:?} scramble = {} n_runs = {} master_seed = {}",
            s.batch_sizes,
            s.samplers.iter().map(|k| k.name()).collect::<Vec<_>>(),
            s.settings.scramble,
            s.n_runs,
            s.master_seed
        ),
        format!(
            "iterations = ({}, {}) lr = ({}, {}) halve_every = ({}, {}) weight_decay = {}",
            sch.iterations_first,
            sch.iterations_rest,
            sch.lr_first,
            sch.lr_rest,
            sch.halve_every_first,
            sch.halve_every_rest,
            sch.weight_decay
        ),
        format!(
            "network width = {} depth = {} batch_norm = {}",
            net.width_for(p.d),
            net.depth,
            net.batch_norm
        ),
        format!(
            "eval_points = {} reference_samples = {}",
            s.eval_points, s.reference.samples
        ),
    ]
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(Error),
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e)
}

fn runtime(e: Error) -> Failure {
    match e {
        Error::Config(_) => Failure::Usage(e),
        other => Failure::Runtime(other),
    }
}

fn load_config(path: &Path) -> std::result::Result<(ExperimentConfig, Resolved), Failure> {
    let cfg = ExperimentConfig::load(path).map_err(usage)?;
    let resolved = cfg.resolve().map_err(usage)?;
    Ok((cfg, resolved))
}

fn with_seed(mut resolved: Resolved, seed: Option<u64>) -> Resolved {
    if let Some(s) = seed {
        resolved.run.master_seed = s;
    }
    resolved
}

fn header_for(resolved: &Resolved) -> CsvHeader {
    let text = resolved.to_config().to_toml();
    CsvHeader::new(fingerprint_text(&text)).with_lines(resolved.describe())
}

fn cmd_solve(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> std::result::Result<(), Failure> {
    let (_, resolved) = load_config(config)?;
    let resolved = with_seed(resolved, seed);
    let out = out.unwrap_or_else(|| resolved.run.output_dir.clone());
    let grid = TimeGrid::uniform(resolved.problem.horizon, resolved.steps).map_err(usage)?;
    let solution = solve(&resolved.problem, &grid, &resolved.settings, resolved.run.master_seed).map_err(runtime)?;
    solution.save(&out).map_err(runtime)?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, resolved.to_config().to_toml()).map_err(|e| Failure::Runtime(Error::io(&cfg_path, e)))?;
    for r in &solution.records {
        println!(
            "step {}: {} iterations, loss {:.6e} -> {:.6e}",
            r.step, r.iterations, r.initial_loss, r.final_loss
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Evaluate a saved solution; returns the report.
pub fn evaluate_dir(
    solution_dir: &Path,
    m_eval: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    reference_samples: usize,
    exact_baseline: bool,
) -> Result<ErrorReport> {
    let solution = TrainedSolution::load(solution_dir)?;
    let problem = &solution.problem;
    let m = m_eval.unwrap_or(if problem.has_closed_form() {
        DEFAULT_EVAL_POINTS
    } else {
        DEFAULT_REFERENCE_POINTS
    });
    let seed = seed.unwrap_or_else(|| derive_seed(solution.master_seed, &[tag::EVAL]));
    let reference = ReferenceConfig {
        samples: reference_samples,
        seed: derive_seed(seed, &[tag::REFERENCE]),
    };
    let set = EvalSet::build(problem, m, seed, &reference)?;
    let report = if exact_baseline {
        // Closed forms score zero; hjb scores an independent reference against
        // the evaluation one, which is the Monte Carlo noise floor.
        let baseline = match problem.has_closed_form() {
            true => set.reference.clone(),
            false => reference_batch(
                problem,
                0.0,
                set.eta.view(),
                &ReferenceConfig {
                    seed: derive_seed(reference.seed, &[1]),
                    ..reference
                },
            )?
            .iter()
            .map(|r| r.value)
            .collect(),
        };
        ErrorReport::from_predictions(&set, &baseline)?
    } else {
        evaluate_solution(&solution, &set)?
    };
    let manifest = std::fs::read_to_string(solution_dir.join("manifest.toml"))
        .map_err(|e| Error::io(solution_dir.join("manifest.toml"), e))?;
    let header = CsvHeader::new(fingerprint_text(&manifest)).with_lines([
        format!("problem = {} d = {} T = {} N = {}", problem.kind, problem.d, problem.horizon, solution.grid.steps()),
        format!("m_eval = {m} seed = {seed} reference_samples = {reference_samples}"),
        format!("predictor = {}", if exact_baseline { "exact_baseline" } else { "network" }),
    ]);
    write_report_csv(&out.join("report.csv"), &header, &report)?;
    write_histogram_csv(&out.join("histogram.csv"), &header, &report.histogram)?;
    Ok(report)
}

fn probe_integrand(resolved: &Resolved, seed: u64) -> Result<(Box<dyn Integrand>, Oracle)> {
    let probe = &resolved.probe;
    match probe.mode {
        ProbeMode::Genz => Ok((Box::new(GenzProduct { dim: probe.genz_dim }), Oracle::Exact(1.0))),
        ProbeMode::Constant => Ok((
            Box::new(ConstantIntegrand {
                dim: probe.genz_dim,
                value: 1.0,
            }),
            Oracle::Exact(1.0),
        )),
        ProbeMode::Network => {
            let problem = resolved.problem.clone();
            let grid = TimeGrid::uniform(problem.horizon, resolved.steps)?;
            let init = derive_seed(seed, &[tag::PROBE, tag::INIT]);
            let network = &resolved.settings.network;
            let nets = StepNetworks::xavier(problem.d, network, init)?;
            let next = if probe.step + 1 < grid.steps() {
                Some(StepNetworks::xavier(problem.d, network, derive_seed(init, &[1]))?.u)
            } else {
                None
            };
            Ok((
                Box::new(StepLossIntegrand {
                    t_i: grid.t(probe.step),
                    dt: grid.dt(probe.step),
                    problem,
                    nets,
                    next,
                }),
                Oracle::Rqmc(probe.oracle_points),
            ))
        }
    }
}

/// Run the MC and RQMC probes described by `resolved`.
pub fn rate_probe(resolved: &Resolved) -> Result<Vec<RateProbeResult>> {
    let seed = resolved.run.master_seed;
    let (integrand, oracle) = probe_integrand(resolved, seed)?;
    [SamplerKind::Mc, SamplerKind::Rqmc]
        .into_iter()
        .map(|kind| {
            quadrature_rate_probe(
                integrand.as_ref(),
                kind,
                &resolved.probe.m_values,
                resolved.probe.replications,
                oracle,
                derive_seed(seed, &[tag::PROBE]),
            )
        })
        .collect()
}

fn cmd_rate_probe(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
) -> std::result::Result<(), Failure> {
    let (_, resolved) = load_config(config)?;
    let mut resolved = with_seed(resolved, seed);
    if let Some(m) = mode {
        resolved.probe.mode = m.into();
    }
    let out = out.unwrap_or_else(|| resolved.run.output_dir.clone());
    let results = rate_probe(&resolved).map_err(runtime)?;
    let header = header_for(&resolved).with_lines([
        "rmse = quadrature error of the empirical risk at fixed parameters (generalization-error proxy)".to_string(),
    ]);
    let path = out.join("rate_probe.csv");
    write_rate_csv(&path, &header, &results).map_err(runtime)?;
    for r in &results {
        match r.fitted_slope {
            Some(s) => println!("{}: fitted slope {s:.3}", r.sampler),
            None => println!("{}: degenerate integrand (zero error at every m), slope undefined", r.sampler),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn histogram_name(d: usize, row: &SuiteRow, which: &str) -> String {
    format!("hist_d{}_m{}_{}_{}.csv", d, row.cell.m, row.cell.sampler, which)
}

fn cmd_reproduce_table(table: TableId, scale: Scale, out: &Path, seed: u64) -> std::result::Result<(), Failure> {
    let suites = table_preset(table.kind(), scale, seed).map_err(usage)?;
    if scale == Scale::Full {
        eprintln!("full scale: 2 dimensions x 3 batch sizes x 2 samplers x 8 runs; expect a very long run");
    }
    let mut results = Vec::with_capacity(suites.len());
    for suite in &suites {
        results.push(run_suite(suite).map_err(runtime)?);
    }
    let scale_name = match scale {
        Scale::Desk => "desk (reduced d, N and iterations)",
        Scale::Full => "full",
    };
    let mut lines = vec![format!("table = {} scale = {scale_name}", table.kind())];
    for s in &suites {
        lines.extend(describe_suite(s));
    }
    let header = CsvHeader::new(fingerprint_text(&lines.join("\n"))).with_lines(lines);
    let tables: Vec<(&ProblemSpec, usize, &[SuiteRow])> = suites
        .iter()
        .zip(&results)
        .map(|(s, rows)| (&s.problem, s.steps, rows.as_slice()))
        .collect();
    let scale_tag = if scale == Scale::Desk { "desk" } else { "full" };
    let path = out.join(format!("table_{}_{scale_tag}.csv", table.kind()));
    write_suite_csv(&path, &header, &tables).map_err(runtime)?;
    for (suite, rows) in suites.iter().zip(&results) {
        for row in rows {
            println!(
                "{} d={} N={} m={} {}: mean {:.4e} std {:.4e} ({} of {} runs)",
                suite.problem.kind,
                suite.problem.d,
                suite.steps,
                row.cell.m,
                row.cell.sampler,
                row.mean,
                row.std,
                row.errors.len(),
                row.n_runs
            );
            for f in &row.failures {
                eprintln!("  failed {f}");
            }
            for (which, report) in [("best", &row.best), ("worst", &row.worst)] {
                if let Some(report) = report {
                    let hpath = out.join("histograms").join(histogram_name(suite.problem.d, row, which));
                    let h = header.clone().with_lines([format!("{which} run relative_l2 = {}", report.relative_l2)]);
                    write_histogram_csv(&hpath, &h, &report.histogram).map_err(runtime)?;
                }
            }
        }
    }
    println!("wrote {}", path.display());
    if results.iter().flatten().any(|r| !r.complete()) {
        return Err(Failure::Runtime(Error::Config("some runs failed; table is incomplete".into())));
    }
    Ok(())
}

/// Execute parsed arguments.
pub fn run(cli: Cli) -> std::result::Result<(), Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage(Error::Config("--workers must be at least 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(Error::Config(e.to_string())))?;
    }
    match cli.command {
        Command::Solve { config, out, seed } => cmd_solve(&config, out, seed),
        Command::Evaluate {
            solution,
            m_eval,
            seed,
            out,
            reference_samples,
            exact_baseline,
        } => {
            let out = out.unwrap_or_else(|| solution.clone());
            let report = evaluate_dir(&solution, m_eval, seed, &out, reference_samples, exact_baseline).map_err(|e| {
                match e {
                    Error::Config(_) => Failure::Usage(e),
                    other => Failure::Runtime(other),
                }
            })?;
            println!(
                "relative L2 error {:.6e} (std error {:.2e}), {} of {} errors outside [-0.1, 0.1]",
                report.relative_l2,
                report.std_error,
                report.histogram.out_of_range,
                report.pointwise_errors.len()
            );
            Ok(())
        }
        Command::RateProbe { config, out, seed, mode } => cmd_rate_probe(&config, out, seed, mode),
        Command::ReproduceTable { table, scale, out, seed } => cmd_reproduce_table(table, scale, &out, seed),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
