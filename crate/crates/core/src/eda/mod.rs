//! Desk-scale timing-debug pack.
//!
//! Reports use a line-based text format (see [`report`]). Units are fixed:
//! ns for time, ohm for resistance, fF for capacitance. The analyses in
//! [`analysis`] and [`stats`] are pure functions over parsed reports and are
//! exposed to agents through [`tools`].

pub mod analysis;
mod decimal;
pub mod fixtures;
pub mod kb;
pub mod report;
pub mod stats;
pub mod tools;

use thiserror::Error;

pub use analysis::{
    aggressor_anomalies, compare_timing_tables, key_multiset, missing_clock_edges, rc_mismatch_pairs,
    slowest_stage_constraints, AggressorCheck, Anomaly, AnomalyKey, AnomalyKind, StageFilter,
};
pub use fixtures::{generate, generate_batch, FixtureSet, FixtureSpec, Manifest, Planted, TaskId};
pub use kb::seed_rtl_syntax_kb;
pub use report::{parse_timing_report, render_timing_report, Check, ParseError, TimingReport};
pub use stats::{timing_distribution, timing_metric_compare, Distribution, Metric, MetricTable};
pub use tools::eda_catalog;

use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EdaError {
    #[error("WRONG_CHECK: expected a {expected} report, got {found}")]
    WrongCheck { expected: Check, found: Check },
    #[error("BAD_THRESHOLD: {0}")]
    BadThreshold(String),
    #[error("INCOMPARABLE: {0}")]
    Incomparable(String),
    #[error("BAD_BIN_WIDTH: bin width must be a positive finite number, got {0}")]
    BadBinWidth(f64),
    #[error("NO_REPORTS: at least one report is required")]
    NoReports,
    #[error("BAD_FIXTURE_SPEC: {0}")]
    BadFixtureSpec(String),
    #[error("MANIFEST_ERROR line {line}: {message}")]
    Manifest { line: usize, message: String },
}

impl EdaError {
    pub fn code(&self) -> &'static str {
        match self {
            EdaError::WrongCheck { .. } => "WRONG_CHECK",
            EdaError::BadThreshold(_) => "BAD_THRESHOLD",
            EdaError::Incomparable(_) => "INCOMPARABLE",
            EdaError::BadBinWidth(_) => "BAD_BIN_WIDTH",
            EdaError::NoReports => "NO_REPORTS",
            EdaError::BadFixtureSpec(_) => "BAD_FIXTURE_SPEC",
            EdaError::Manifest { .. } => "MANIFEST_ERROR",
        }
    }
}

/// Thresholds for a full single-report scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanParams {
    pub rc_ratio: f64,
    pub xtalk_ratio: f64,
    pub aggressor_ratio: f64,
    pub top_k: usize,
    pub min_delay: Option<f64>,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            rc_ratio: fixtures::M2_RATIO,
            xtalk_ratio: fixtures::M3_THRESHOLD,
            aggressor_ratio: fixtures::M4_THRESHOLD,
            top_k: fixtures::M5_TOP_K,
            min_delay: Some(fixtures::M5_MIN_DELAY),
        }
    }
}

/// Findings of every single-report analysis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scan {
    pub missing_clock_edges: Vec<Anomaly>,
    pub rc_mismatch: Vec<Anomaly>,
    pub xtalk_constraint: Vec<Anomaly>,
    pub aggressor_rc: Vec<Anomaly>,
    pub slow_stages: Vec<Anomaly>,
}

impl Scan {
    pub fn total(&self) -> usize {
        self.missing_clock_edges.len()
            + self.rc_mismatch.len()
            + self.xtalk_constraint.len()
            + self.aggressor_rc.len()
            + self.slow_stages.len()
    }
}

pub fn scan_report(report: &TimingReport, params: &ScanParams) -> Result<Scan, EdaError> {
    let all = StageFilter::all();
    Ok(Scan {
        missing_clock_edges: missing_clock_edges(report)?,
        rc_mismatch: rc_mismatch_pairs(report, params.rc_ratio, &all)?,
        xtalk_constraint: aggressor_anomalies(report, AggressorCheck::Constraint, params.xtalk_ratio, &all)?,
        aggressor_rc: aggressor_anomalies(report, AggressorCheck::Rc, params.aggressor_ratio, &all)?,
        slow_stages: slowest_stage_constraints(report, params.top_k, params.min_delay)?,
    })
}

/// [`scan_report`] over many reports under the chosen execution strategy.
pub fn scan_batch(exec: Exec, reports: &[TimingReport], params: &ScanParams) -> Vec<Result<Scan, EdaError>> {
    exec.map(reports, |r| scan_report(r, params))
}
