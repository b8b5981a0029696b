//! Gaps between each scheme and the lower bound in a result table.

use std::io::Write;

use thiserror::Error;

use crate::config::SchemeName;
use crate::experiment::ResultTable;

/// Relative slack below the lower bound tolerated before a row is flagged.
pub const SANDWICH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("comparison needs at least two schemes, found {0}")]
    NeedTwoSchemes(usize),
    #[error("table has no gp_lb rows to compare against")]
    MissingLowerBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub m: f64,
    pub scheme: SchemeName,
    pub avg_rate: f64,
    pub lb_rate: f64,
    pub gap: f64,
    pub rel_gap: f64,
    /// Rate below the lower bound by more than [`SANDWICH_TOL`].
    pub violation: bool,
}

/// Per-M gaps of every non-bound row against the `gp_lb` row at the same M.
/// Rows whose M has no bound are skipped.
pub fn compare_report(table: &ResultTable) -> Result<Vec<GapRow>, CompareError> {
    let schemes = table.schemes();
    if schemes.len() < 2 {
        return Err(CompareError::NeedTwoSchemes(schemes.len()));
    }
    if !schemes.contains(&SchemeName::GpLb) {
        return Err(CompareError::MissingLowerBound);
    }
    let mut out = Vec::new();
    for r in table.rows.iter().filter(|r| r.scheme != SchemeName::GpLb) {
        let Some(lb) = table.rows.iter().find(|b| b.scheme == SchemeName::GpLb && b.m == r.m) else {
            log::warn!("no gp_lb row at M = {}; skipping {}", r.m, r.scheme);
            continue;
        };
        let gap = r.avg_rate - lb.avg_rate;
        let rel_gap = if lb.avg_rate > 0.0 { gap / lb.avg_rate } else { 0.0 };
        let violation = gap < -SANDWICH_TOL * lb.avg_rate.abs().max(f64::MIN_POSITIVE);
        if violation {
            log::warn!("{} at M = {} is below the lower bound: {} < {}", r.scheme, r.m, r.avg_rate, lb.avg_rate);
        }
        out.push(GapRow { m: r.m, scheme: r.scheme, avg_rate: r.avg_rate, lb_rate: lb.avg_rate, gap, rel_gap, violation });
    }
    Ok(out)
}

pub fn write_report<W: Write>(rows: &[GapRow], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["M", "scheme", "avg_rate", "lb_rate", "gap", "rel_gap", "violation"])?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.scheme.to_string(),
            r.avg_rate.to_string(),
            r.lb_rate.to_string(),
            r.gap.to_string(),
            r.rel_gap.to_string(),
            r.violation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
