//! Experiment configuration files.
//!
//! A TOML file with the sections `[problem]`, `[sampler]`, `[training]`,
//! `[network]`, `[run]`, `[eval]` and `[rate_probe]`. Every key is optional
//! and unknown keys are rejected. [`ExperimentConfig::effective`] fills in
//! the defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `problem.kind` | `heat` |
//! | `problem.d` | 10 |
//! | `problem.horizon` | 1.0 |
//! | `problem.steps` | 2 |
//! | `problem.a`, `problem.b` | `-0.5, 0.5` (hjb: `0, 1`) |
//! | `problem.mu`, `problem.sigma` | `0.2/d, 1/sqrt(d)` (hjb: `0, sqrt 2`) |
//! | `sampler.kind`, `sampler.scramble` | `rqmc`, `owen_nested` |
//! | `training.*` | 50000 / 5000 iterations, lr 0.01 / 0.001 halved every 5000 / 500, batch 4096, weight decay 0.01 |
//! | `network.width`, `network.depth`, `network.batch_norm` | `d + 20`, 4, true |
//! | `network.param_bound` | unset (no projection) |
//! | `run.n_runs`, `run.master_seed`, `run.output_dir` | 8, 0, `out` |
//! | `eval.m_eval`, `eval.reference_samples`, `eval.reference_points` | 65536, 131072, 256 |
//! | `rate_probe.*` | mode `network`, step 0, m from 2^8 to 2^14, 32 replications, oracle 2^22, genz dimension 6 |

use crate::dbdp::{NetworkConfig, SamplerKind, SolverSettings, TrainingSchedule};
use crate::lowdisc::ScrambleMode;
use crate::problems::{default_coefficients, ProblemKind, ProblemSpec, ReferenceConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProblemKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<SamplerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scramble: Option<ScrambleMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_first: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations_rest: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_first: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_rest: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halve_every_first: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halve_every_rest: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_norm: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub param_bound: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_eval: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_samples: Option<usize>,
    /// Evaluation points for problems whose reference is a Monte Carlo estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Step loss of randomly initialized networks on `[problem]`.
    Network,
    /// Smooth product integrand with known mean.
    Genz,
    Constant,
}

impl std::str::FromStr for ProbeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(ProbeMode::Network),
            "genz" => Ok(ProbeMode::Genz),
            "constant" => Ok(ProbeMode::Constant),
            other => Err(Error::Config(format!("unknown rate-probe mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateProbeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ProbeMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_min_log2: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_max_log2: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_log2: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub genz_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub sampler: SamplerSection,
    pub training: TrainingSection,
    pub network: NetworkSection,
    pub run: RunSection,
    pub eval: EvalSection,
    pub rate_probe: RateProbeSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub n_runs: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub m_eval: usize,
    pub reference_points: usize,
    pub reference: ReferenceConfig,
}

impl EvalSettings {
    /// Number of evaluation points for `problem`.
    pub fn points_for(&self, problem: &ProblemSpec) -> usize {
        if problem.has_closed_form() {
            self.m_eval
        } else {
            self.reference_points
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSettings {
    pub mode: ProbeMode,
    pub step: usize,
    pub m_values: Vec<usize>,
    pub replications: usize,
    pub oracle_points: usize,
    pub genz_dim: usize,
}

/// A configuration with every default applied and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub problem: ProblemSpec,
    pub steps: usize,
    pub settings: SolverSettings,
    pub run: RunSettings,
    pub eval: EvalSettings,
    pub probe: ProbeSettings,
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        Err(Error::Config(format!("{name} must be at least 1")))
    } else {
        Ok(v)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize")
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let p = &self.problem;
        let kind = p.kind.unwrap_or(ProblemKind::Heat);
        let d = positive("problem.d", p.d.unwrap_or(10))?;
        let (a, b, mu, sigma) = default_coefficients(kind, d);
        let problem = ProblemSpec::with_coefficients(
            kind,
            d,
            p.horizon.unwrap_or(1.0),
            p.a.unwrap_or(a),
            p.b.unwrap_or(b),
            p.mu.unwrap_or(mu),
            p.sigma.unwrap_or(sigma),
        )?;
        let steps = positive("problem.steps", p.steps.unwrap_or(2))?;

        let t = &self.training;
        let base = TrainingSchedule::default();
        let schedule = TrainingSchedule {
            iterations_first: t.iterations_first.unwrap_or(base.iterations_first),
            iterations_rest: t.iterations_rest.unwrap_or(base.iterations_rest),
            lr_first: t.lr_first.unwrap_or(base.lr_first),
            lr_rest: t.lr_rest.unwrap_or(base.lr_rest),
            halve_every_first: t.halve_every_first.unwrap_or(base.halve_every_first),
            halve_every_rest: t.halve_every_rest.unwrap_or(base.halve_every_rest),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            weight_decay: t.weight_decay.unwrap_or(base.weight_decay),
        };
        schedule.validate()?;
        let n = &self.network;
        let network = NetworkConfig {
            width: Some(positive("network.width", n.width.unwrap_or(d + 20))?),
            depth: positive("network.depth", n.depth.unwrap_or(4))?,
            batch_norm: n.batch_norm.unwrap_or(true),
            param_bound: n.param_bound,
        };
        if let Some(r) = network.param_bound {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("network.param_bound must be positive, got {r}")));
            }
        }
        let settings = SolverSettings {
            schedule,
            network,
            sampler: self.sampler.kind.unwrap_or(SamplerKind::Rqmc),
            scramble: self.sampler.scramble.unwrap_or(ScrambleMode::OwenNested),
        };
        let run = RunSettings {
            n_runs: positive("run.n_runs", self.run.n_runs.unwrap_or(8))?,
            master_seed: self.run.master_seed.unwrap_or(0),
            output_dir: self.run.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        };
        let eval = EvalSettings {
            m_eval: positive("eval.m_eval", self.eval.m_eval.unwrap_or(1 << 16))?,
            reference_points: positive("eval.reference_points", self.eval.reference_points.unwrap_or(256))?,
            reference: ReferenceConfig {
                samples: positive("eval.reference_samples", self.eval.reference_samples.unwrap_or(1 << 17))?,
                seed: 0,
            },
        };
        let r = &self.rate_probe;
        let (lo, hi) = (r.m_min_log2.unwrap_or(8), r.m_max_log2.unwrap_or(14));
        if lo > hi || hi > 40 {
            return Err(Error::Config(format!("rate_probe needs m_min_log2 <= m_max_log2 <= 40, got {lo}, {hi}")));
        }
        let oracle_log2 = r.oracle_log2.unwrap_or(22);
        if oracle_log2 > 40 {
            return Err(Error::Config("rate_probe.oracle_log2 must be at most 40".into()));
        }
        let step = r.step.unwrap_or(0);
        if step >= steps {
            return Err(Error::Config(format!("rate_probe.step {step} is outside 0..{steps}")));
        }
        let probe = ProbeSettings {
            mode: r.mode.unwrap_or(ProbeMode::Network),
            step,
            m_values: (lo..=hi).map(|k| 1usize << k).collect(),
            replications: positive("rate_probe.replications", r.replications.unwrap_or(32))?,
            oracle_points: 1usize << oracle_log2,
            genz_dim: positive("rate_probe.genz_dim", r.genz_dim.unwrap_or(6))?,
        };
        Ok(Resolved {
            problem,
            steps,
            settings,
            run,
            eval,
            probe,
        })
    }

    /// The same configuration with every default written out.
    pub fn effective(&self) -> Result<Self> {
        let r = self.resolve()?;
        Ok(r.to_config())
    }

    /// SHA-256 of the effective configuration, hex encoded.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(fingerprint_text(&self.effective()?.to_toml()))
    }
}

pub fn fingerprint_text(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Resolved {
    pub fn to_config(&self) -> ExperimentConfig {
        let p = &self.problem;
        let s = &self.settings.schedule;
        let n = &self.settings.network;
        let pr = &self.probe;
        ExperimentConfig {
            problem: ProblemSection {
                kind: Some(p.kind),
                d: Some(p.d),
                horizon: Some(p.horizon),
                steps: Some(self.steps),
                a: Some(p.a),
                b: Some(p.b),
                mu: Some(p.mu),
                sigma: Some(p.sigma),
            },
            sampler: SamplerSection {
                kind: Some(self.settings.sampler),
                scramble: Some(self.settings.scramble),
            },
            training: TrainingSection {
                batch_size: Some(s.batch_size),
                iterations_first: Some(s.iterations_first),
                iterations_rest: Some(s.iterations_rest),
                lr_first: Some(s.lr_first),
                lr_rest: Some(s.lr_rest),
                halve_every_first: Some(s.halve_every_first),
                halve_every_rest: Some(s.halve_every_rest),
                weight_decay: Some(s.weight_decay),
            },
            network: NetworkSection {
                width: n.width,
                depth: Some(n.depth),
                batch_norm: Some(n.batch_norm),
                param_bound: n.param_bound,
            },
            run: RunSection {
                n_runs: Some(self.run.n_runs),
                master_seed: Some(self.run.master_seed),
                output_dir: Some(self.run.output_dir.clone()),
            },
            eval: EvalSection {
                m_eval: Some(self.eval.m_eval),
                reference_samples: Some(self.eval.reference.samples),
                reference_points: Some(self.eval.reference_points),
            },
            rate_probe: RateProbeSection {
                mode: Some(pr.mode),
                step: Some(pr.step),
                m_min_log2: pr.m_values.first().map(|m| m.trailing_zeros()),
                m_max_log2: pr.m_values.last().map(|m| m.trailing_zeros()),
                replications: Some(pr.replications),
                oracle_log2: Some(pr.oracle_points.trailing_zeros()),
                genz_dim: Some(pr.genz_dim),
            },
        }
    }

    /// `section.key = value` lines describing every effective value.
    pub fn describe(&self) -> Vec<String> {
        let text = self.to_config().to_toml();
        let mut section = String::new();
        let mut lines = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
            } else {
                lines.push(format!("{section}.{line}"));
            }
        }
        lines
    }
}
