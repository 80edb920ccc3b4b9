//! Solution quality and sampling-rate measurements.

mod csv;
mod rate;
mod suite;

pub use csv::{write_histogram_csv, write_rate_csv, write_report_csv, write_suite_csv, CsvHeader};
pub use rate::{
    fit_rate, quadrature_rate_probe, ConstantIntegrand, GenzProduct, Integrand, Oracle, RateProbeResult,
    StepLossIntegrand,
};
pub use suite::{mean_std, run_suite, SuiteCell, SuiteConfig, SuiteRow};

use crate::dbdp::TrainedSolution;
use crate::lowdisc::mc_points;
use crate::problems::{reference_batch, ProblemSpec, ReferenceConfig};
use crate::{Error, Result};
use ndarray::Array2;

/// Default evaluation sample size.
pub const DEFAULT_EVAL_POINTS: usize = 1 << 16;
pub const HISTOGRAM_RANGE: (f64, f64) = (-0.1, 0.1);
pub const HISTOGRAM_BINS: usize = 50;

/// Uniform evaluation points on `[a, b]^d` with reference values of
/// `u(0, .)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub eta: Array2<f64>,
    pub reference: Vec<f64>,
    /// Monte Carlo standard error of each reference value (zero for closed forms).
    pub reference_std_error: Vec<f64>,
}

impl EvalSet {
    /// Draw `m` i.i.d. uniform points and compute their reference values.
    pub fn build(problem: &ProblemSpec, m: usize, seed: u64, reference: &ReferenceConfig) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("evaluation needs at least one point".into()));
        }
        let u = mc_points(seed, m, problem.d).into_inner();
        let eta = u.mapv(|v| problem.a + (problem.b - problem.a) * v);
        let values = reference_batch(problem, 0.0, eta.view(), reference)?;
        Ok(EvalSet {
            eta,
            reference: values.iter().map(|r| r.value).collect(),
            reference_std_error: values.iter().map(|r| r.std_error).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }
}

/// Density histogram over `[lo, hi]` with a separate out-of-range tally.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub density: Vec<f64>,
    pub out_of_range: usize,
    pub total: usize,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.density.len() as f64
    }

    pub fn edges(&self) -> Vec<(f64, f64)> {
        let w = self.bin_width();
        (0..self.density.len())
            .map(|k| (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w))
            .collect()
    }

    /// Integral of the density over `[lo, hi]`, the in-range fraction.
    pub fn in_range_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width()
    }
}

/// Normalized histogram of `errors`: densities integrate to the in-range
/// fraction, values outside `[lo, hi]` (or non-finite) are only counted.
pub fn pointwise_histogram(errors: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if !(lo < hi) || bins == 0 {
        return Err(Error::Config(format!("histogram needs lo < hi and bins > 0, got [{lo}, {hi}], {bins}")));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut out_of_range = 0;
    for &e in errors {
        if e.is_finite() && e >= lo && e <= hi {
            let k = (((e - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        } else {
            out_of_range += 1;
        }
    }
    let norm = errors.len().max(1) as f64 * width;
    Ok(Histogram {
        lo,
        hi,
        density: counts.iter().map(|&c| c as f64 / norm).collect(),
        out_of_range,
        total: errors.len(),
    })
}

/// `sqrt(sum (pred - ref)^2 / sum ref^2)`.
pub fn relative_l2(prediction: &[f64], reference: &[f64]) -> Result<f64> {
    if prediction.len() != reference.len() || reference.is_empty() {
        return Err(Error::Contract("prediction and reference lengths differ or are zero".into()));
    }
    let num: f64 = prediction.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::Domain("reference solution is identically zero".into()));
    }
    Ok((num / den).sqrt())
}

/// Delta-method standard error of the relative-L2 ratio estimator.
pub fn relative_l2_std_error(prediction: &[f64], reference: &[f64]) -> f64 {
    let m = reference.len() as f64;
    let e2: Vec<f64> = prediction.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).collect();
    let u2: Vec<f64> = reference.iter().map(|r| r * r).collect();
    let a = e2.iter().sum::<f64>() / m;
    let b = u2.iter().sum::<f64>() / m;
    if a == 0.0 || b == 0.0 || m < 2.0 {
        return 0.0;
    }
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (x, y) in e2.iter().zip(&u2) {
        vaa += (x - a) * (x - a);
        vbb += (y - b) * (y - b);
        vab += (x - a) * (y - b);
    }
    let (vaa, vbb, vab) = (vaa / (m - 1.0), vbb / (m - 1.0), vab / (m - 1.0));
    let var_ratio = (vaa / (b * b) - 2.0 * a * vab / (b * b * b) + a * a * vbb / (b * b * b * b)) / m;
    var_ratio.max(0.0).sqrt() / (2.0 * (a / b).sqrt())
}

/// Accuracy of one predictor on an [`EvalSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub relative_l2: f64,
    /// Sampling standard error of `relative_l2` over the evaluation points.
    pub std_error: f64,
    /// Largest Monte Carlo standard error among the reference values.
    pub max_reference_std_error: f64,
    /// `prediction - reference` per evaluation point.
    pub pointwise_errors: Vec<f64>,
    pub histogram: Histogram,
}

impl ErrorReport {
    pub fn from_predictions(set: &EvalSet, prediction: &[f64]) -> Result<Self> {
        let relative = relative_l2(prediction, &set.reference)?;
        let pointwise_errors: Vec<f64> = prediction.iter().zip(&set.reference).map(|(p, r)| p - r).collect();
        let histogram = pointwise_histogram(&pointwise_errors, HISTOGRAM_RANGE.0, HISTOGRAM_RANGE.1, HISTOGRAM_BINS)?;
        Ok(ErrorReport {
            relative_l2: relative,
            std_error: relative_l2_std_error(prediction, &set.reference),
            max_reference_std_error: set.reference_std_error.iter().fold(0.0, |m: f64, v| m.max(*v)),
            pointwise_errors,
            histogram,
        })
    }
}

/// Evaluate `U_0` of a trained solution (evaluation-mode batch norm).
pub fn evaluate_solution(solution: &TrainedSolution, set: &EvalSet) -> Result<ErrorReport> {
    let prediction = solution.predict_initial(set.eta.view())?;
    ErrorReport::from_predictions(set, &prediction)
}
