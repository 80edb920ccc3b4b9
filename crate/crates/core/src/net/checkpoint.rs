//! Plain-text network checkpoints.
//!
//! ```text
//! l_1 l_2 ... l_{k+1}
//! <batch-norm flag 0|1> <number of normalized units>
//! <flat parameters>
//! <gamma/beta values> <running means> <running variances>   (only with batch norm)
//! ```
//!
//! Values are written in shortest round-trip exponent form, so reading a
//! checkpoint back reproduces the network bit for bit.

use super::{BatchNormState, Mlp, NetworkSpec, Parameters};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

fn join(values: &[f64], out: &mut String) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:e}").expect("writing to a String");
    }
}

pub fn render_checkpoint(net: &Mlp) -> String {
    let mut out = String::new();
    let sizes: Vec<String> = net.spec().layer_sizes().iter().map(|s| s.to_string()).collect();
    out.push_str(&sizes.join(" "));
    out.push('\n');
    match net.batch_norm() {
        Some(bn) => writeln!(out, "1 {}", bn.unit_count()).unwrap(),
        None => out.push_str("0 0\n"),
    }
    join(net.params().as_slice(), &mut out);
    out.push('\n');
    if let Some(bn) = net.batch_norm() {
        let mut all = bn.affine().to_vec();
        all.extend_from_slice(bn.running_mean());
        all.extend_from_slice(bn.running_var());
        join(&all, &mut out);
        out.push('\n');
    }
    out
}

pub fn write_checkpoint(net: &Mlp, path: &Path) -> Result<()> {
    std::fs::write(path, render_checkpoint(net)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Mlp> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<Mlp> {
    let bad = |why: String| Error::format(path, why);
    let mut lines = text.lines();
    let mut next_line = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what} line")));

    let sizes = next_line("layer sizes")?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(format!("line 1: {e}")))?;
    let spec = NetworkSpec::new(sizes).map_err(|e| bad(format!("line 1: {e}")))?;

    let header: Vec<usize> = next_line("batch-norm")?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| bad(format!("line 2: {e}")))?;
    let (flag, units) = match header.as_slice() {
        [f, u] if *f <= 1 => (*f == 1, *u),
        _ => return Err(bad("line 2: expected `<0|1> <unit count>`".into())),
    };

    let floats = |line: &str, lineno: usize| {
        line.split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {lineno}: {e}")))
    };
    let flat = floats(next_line("parameter")?, 3)?;
    let params = Parameters::from_flat(&spec, flat).map_err(|e| bad(format!("line 3: {e}")))?;

    let bn = if flag {
        let hidden = spec.hidden_sizes();
        let total: usize = hidden.iter().sum();
        if units != total {
            return Err(bad(format!("line 2: {units} normalized units, network has {total}")));
        }
        let values = floats(next_line("batch-norm state")?, 4)?;
        if values.len() != 4 * total {
            return Err(bad(format!(
                "line 4: expected {} batch-norm values, found {}",
                4 * total,
                values.len()
            )));
        }
        let running_var = values[3 * total..].to_vec();
        if running_var.iter().any(|v| *v < 0.0) {
            return Err(bad("line 4: negative running variance".into()));
        }
        Some(BatchNormState::from_parts(
            hidden,
            values[..2 * total].to_vec(),
            values[2 * total..3 * total].to_vec(),
            running_var,
        ))
    } else {
        None
    };
    Mlp::new(params, bn)
}
