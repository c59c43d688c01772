//! Metric serialization: the versioned per-round CSV and helpers shared by
//! the command-line front end.
//!
//! CSV layout: a `schema_version,1` line, then the header
//! `round,algorithm,scenario,test_loss,log_test_loss,accuracy,w_norm_sq,soft_sparsity_w,B_estimate,reals_transmitted`,
//! then one row per round. Floats are written with 17 significant digits so
//! values round-trip losslessly.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::analysis::RoundMetrics;
use crate::error::{FpsError, Result};

pub const ROUNDS_SCHEMA_VERSION: u32 = 1;
pub const ROUNDS_HEADER: &str =
    "round,algorithm,scenario,test_loss,log_test_loss,accuracy,w_norm_sq,soft_sparsity_w,B_estimate,reals_transmitted";

/// 17-significant-digit float formatting; parses back to the identical bits
/// (NaN and infinities spelled by name).
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        other => other.parse().map_err(|_| FpsError::Parse {
            line,
            message: format!("bad float {other:?}"),
        }),
    }
}

pub fn write_rounds_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rounds_csv_to(&mut out, metrics)
}

pub fn write_rounds_csv_to(out: &mut impl Write, metrics: &[RoundMetrics]) -> Result<()> {
    writeln!(out, "schema_version,{ROUNDS_SCHEMA_VERSION}")?;
    writeln!(out, "{ROUNDS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            m.round,
            m.algorithm,
            m.scenario,
            format_f64(m.test_loss),
            format_f64(m.log_test_loss),
            format_f64(m.accuracy),
            format_f64(m.w_norm_sq),
            format_f64(m.soft_sparsity_w),
            format_f64(m.b_estimate),
            m.reals_transmitted,
        )?;
    }
    Ok(())
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();

    let version_line = lines
        .next()
        .ok_or_else(|| FpsError::Parse { line: 1, message: "missing schema line".into() })??;
    let expected = format!("schema_version,{ROUNDS_SCHEMA_VERSION}");
    if version_line != expected {
        return Err(FpsError::Parse {
            line: 1,
            message: format!("expected {expected:?}, got {version_line:?}"),
        });
    }
    let header = lines
        .next()
        .ok_or_else(|| FpsError::Parse { line: 2, message: "missing header".into() })??;
    if header != ROUNDS_HEADER {
        return Err(FpsError::Parse { line: 2, message: format!("unexpected header {header:?}") });
    }

    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 3;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(FpsError::Parse {
                line: lineno,
                message: format!("expected 10 columns, got {}", cols.len()),
            });
        }
        out.push(RoundMetrics {
            round: cols[0].parse().map_err(|_| FpsError::Parse {
                line: lineno,
                message: format!("bad round {:?}", cols[0]),
            })?,
            algorithm: cols[1].to_string(),
            scenario: cols[2].parse().map_err(|_| FpsError::Parse {
                line: lineno,
                message: format!("bad scenario {:?}", cols[2]),
            })?,
            test_loss: parse_f64(cols[3], lineno)?,
            log_test_loss: parse_f64(cols[4], lineno)?,
            accuracy: parse_f64(cols[5], lineno)?,
            w_norm_sq: parse_f64(cols[6], lineno)?,
            soft_sparsity_w: parse_f64(cols[7], lineno)?,
            b_estimate: parse_f64(cols[8], lineno)?,
            reals_transmitted: cols[9].parse().map_err(|_| FpsError::Parse {
                line: lineno,
                message: format!("bad count {:?}", cols[9]),
            })?,
            soft_sparsity_update: f64::NAN,
            budget_exceeded: false,
        });
    }
    Ok(out)
}
