use super::{ErrorReport, Histogram, RateProbeResult, SuiteRow};
use crate::problems::ProblemSpec;
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Comment lines written at the top of every CSV file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvHeader {
    pub fingerprint: String,
    /// Extra `key = value` provenance lines.
    pub lines: Vec<String>,
}

impl CsvHeader {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        CsvHeader {
            fingerprint: fingerprint.into(),
            lines: Vec::new(),
        }
    }

    pub fn with_lines(mut self, lines: impl IntoIterator<Item = String>) -> Self {
        self.lines.extend(lines);
        self
    }

    fn render(&self) -> String {
        let mut out = format!("# fingerprint {}\n", self.fingerprint);
        for line in &self.lines {
            for part in line.lines() {
                let _ = writeln!(out, "# {part}");
            }
        }
        out
    }
}

fn write(path: &Path, text: String) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Columns `problem,d,N,m,sampler,n_runs,mean_rel_l2,std_rel_l2`; one block
/// of rows per `(problem, N, rows)` entry. `n_runs` counts completed runs.
pub fn write_suite_csv(path: &Path, header: &CsvHeader, tables: &[(&ProblemSpec, usize, &[SuiteRow])]) -> Result<()> {
    let mut out = header.render();
    out.push_str("problem,d,N,m,sampler,n_runs,mean_rel_l2,std_rel_l2\n");
    for (problem, steps, rows) in tables {
        for row in rows.iter() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                problem.kind,
                problem.d,
                steps,
                row.cell.m,
                row.cell.sampler,
                row.errors.len(),
                row.mean,
                row.std
            );
        }
    }
    write(path, out)
}

/// Columns `sampler,m,rmse`, one row per `(sampler, m)`.
pub fn write_rate_csv(path: &Path, header: &CsvHeader, results: &[RateProbeResult]) -> Result<()> {
    let mut out = header.render();
    out.push_str("sampler,m,rmse\n");
    for r in results {
        for (m, rmse) in r.m_values.iter().zip(&r.rmse_values) {
            let _ = writeln!(out, "{},{},{}", r.sampler, m, rmse);
        }
    }
    write(path, out)
}

/// Columns `bin_left,bin_right,density` and a final `out_of_range,<count>` line.
pub fn write_histogram_csv(path: &Path, header: &CsvHeader, histogram: &Histogram) -> Result<()> {
    let mut out = header.render();
    out.push_str("bin_left,bin_right,density\n");
    for ((lo, hi), density) in histogram.edges().into_iter().zip(&histogram.density) {
        let _ = writeln!(out, "{lo},{hi},{density}");
    }
    let _ = writeln!(out, "out_of_range,{}", histogram.out_of_range);
    write(path, out)
}

/// Columns `m_eval,relative_l2,std_error,max_reference_std_error,out_of_range`.
pub fn write_report_csv(path: &Path, header: &CsvHeader, report: &ErrorReport) -> Result<()> {
    let mut out = header.render();
    out.push_str("m_eval,relative_l2,std_error,max_reference_std_error,out_of_range\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{}",
        report.pointwise_errors.len(),
        report.relative_l2,
        report.std_error,
        report.max_reference_std_error,
        report.histogram.out_of_range
    );
    write(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::pointwise_histogram;

    #[test]
    fn histogram_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let h = pointwise_histogram(&[0.0, 0.5], -0.1, 0.1, 4).unwrap();
        let header = CsvHeader::new("abc").with_lines(["scale = desk".to_string()]);
        write_histogram_csv(&path, &header, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# fingerprint abc");
        assert_eq!(lines[1], "# scale = desk");
        assert_eq!(lines[2], "bin_left,bin_right,density");
        assert_eq!(lines.len(), 3 + 4 + 1);
        assert_eq!(*lines.last().unwrap(), "out_of_range,1");
    }
}
