//! Report documents and CSV dumps.

use std::collections::BTreeMap;
use std::io::Write;

use oblique_core::asymptote::{AsymptoteEstimate, Classification};
use oblique_core::hypotheses::{ConditionVerdict, SamplingGrid, Status};
use oblique_core::integrator::{Event, Termination};
use oblique_core::lyapunov::{BoundChainReport, MonotonicityReport};
use oblique_core::problem::DerivedConstants;
use oblique_core::transform::XState;
use serde::Serialize;

use crate::config::{Check, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub verdicts: Vec<ConditionVerdict>,
}

impl CheckReport {
    pub fn any_fails(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fails)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub termination: Termination,
    pub t_last: f64,
    pub final_state: XState,
    pub final_u: f64,
    pub final_v: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    pub events: Vec<Event>,
    /// Sign changes of `x` along the accepted steps.
    pub sign_changes: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LyapunovReports {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v1: Option<MonotonicityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2: Option<MonotonicityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_chain: Option<BoundChainReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub derived: DerivedConstants,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<SamplingGrid>,
    pub hypotheses: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySummary>,
    pub lyapunov: LyapunovReports,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<AsymptoteEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    /// Errors met along the way; the report holds whatever completed.
    pub errors: Vec<String>,
}

/// Wall-clock seconds per phase. Kept out of the compared part of a report.
pub type Timings = BTreeMap<String, f64>;

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    report: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<&'a Timings>,
}

/// Pretty JSON with the report first and timings, when given, last.
pub fn to_json<T: Serialize>(report: &T, timings: Option<&Timings>) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(&Document { report, timings })?;
    s.push('\n');
    Ok(s)
}

/// Shortest representation that reads back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

pub struct CsvRow {
    pub t: f64,
    pub x: f64,
    pub xp: f64,
    pub u: f64,
    pub v: f64,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "x", "xp", "u", "v", "V1", "V2"];

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record([
            fmt_float(r.t),
            fmt_float(r.x),
            fmt_float(r.xp),
            fmt_float(r.u),
            fmt_float(r.v),
            opt_float(r.v1),
            opt_float(r.v2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(t, x - x1 t - x2)` series.
pub fn write_residual_csv<W: Write>(out: W, rows: &[(f64, f64)]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["t", "residual"])?;
    for &(t, r) in rows {
        w.write_record([fmt_float(t), fmt_float(r)])?;
    }
    w.flush()?;
    Ok(())
}
