use super::{SolverSettings, StepNetworks};
use crate::net::{read_checkpoint, write_checkpoint, Mlp};
use crate::problems::{ProblemSpec, TimeGrid};
use crate::{Error, Result};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.toml";
const FORMAT_VERSION: u32 = 1;

/// Training summary of one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub iterations: u64,
    /// Batch loss at the first and last Adam iteration (NaN if none ran).
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Output of the backward scheme: `steps[i]` holds `(U_i, Z_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSolution {
    pub problem: ProblemSpec,
    pub grid: TimeGrid,
    pub settings: SolverSettings,
    pub master_seed: u64,
    pub steps: Vec<StepNetworks>,
    pub records: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    master_seed: u64,
    problem: ProblemSpec,
    grid: TimeGrid,
    settings: SolverSettings,
    steps: Vec<ManifestStep>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestStep {
    #[serde(flatten)]
    record: StepRecord,
    u_file: String,
    z_file: String,
}

fn checkpoint_names(step: usize) -> (String, String) {
    (format!("step_{step:03}_u.ckpt"), format!("step_{step:03}_z.ckpt"))
}

impl TrainedSolution {
    /// `U_0`, the approximation of `u(0, .)`.
    pub fn initial_network(&self) -> &Mlp {
        &self.steps[0].u
    }

    pub fn predict_initial(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        super::predict_values(self.initial_network(), x)
    }

    /// Write the manifest and one checkpoint per network into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut steps = Vec::with_capacity(self.steps.len());
        for (i, (nets, record)) in self.steps.iter().zip(&self.records).enumerate() {
            let (u_file, z_file) = checkpoint_names(i);
            write_checkpoint(&nets.u, &dir.join(&u_file))?;
            write_checkpoint(&nets.z, &dir.join(&z_file))?;
            steps.push(ManifestStep {
                record: record.clone(),
                u_file,
                z_file,
            });
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            master_seed: self.master_seed,
            problem: self.problem.clone(),
            grid: self.grid.clone(),
            settings: self.settings.clone(),
            steps,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &path,
                format!("unsupported format_version {}", manifest.format_version),
            ));
        }
        if manifest.steps.len() != manifest.grid.steps() {
            return Err(Error::format(
                &path,
                format!(
                    "{} step entries for a grid of {} steps",
                    manifest.steps.len(),
                    manifest.grid.steps()
                ),
            ));
        }
        let mut steps = Vec::with_capacity(manifest.steps.len());
        let mut records = Vec::with_capacity(manifest.steps.len());
        for entry in manifest.steps {
            let u = read_checkpoint(&dir.join(&entry.u_file))?;
            let z = read_checkpoint(&dir.join(&entry.z_file))?;
            if u.spec().input_dim() != manifest.problem.d {
                return Err(Error::format(dir.join(&entry.u_file), "input width does not match d"));
            }
            steps.push(StepNetworks::new(u, z).map_err(|e| Error::format(&path, e.to_string()))?);
            records.push(entry.record);
        }
        Ok(TrainedSolution {
            problem: manifest.problem,
            grid: manifest.grid,
            settings: manifest.settings,
            master_seed: manifest.master_seed,
            steps,
            records,
        })
    }
}
