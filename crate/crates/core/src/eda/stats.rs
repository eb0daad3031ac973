use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::decimal::{bin_edge, bin_index, sum};
use super::report::{Check, TimingReport};
use super::EdaError;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Bin {
    /// Bin `k` covers `[k*w, (k+1)*w)`.
    pub k: i64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ReportHistogram {
    pub corner: String,
    pub mode: String,
    pub check: Check,
    pub paths: usize,
    pub min_slack: f64,
    pub max_slack: f64,
    /// Arithmetic mean, rounded to 1e-9 ns.
    pub mean_slack: f64,
    pub bins: Vec<Bin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Distribution {
    pub bin_width: f64,
    pub reports: Vec<ReportHistogram>,
    pub pooled: Vec<Bin>,
}

fn to_bins(counts: &BTreeMap<i64, usize>, w: f64) -> Vec<Bin> {
    counts.iter().map(|(&k, &count)| Bin { k, lo: bin_edge(k, w), hi: bin_edge(k + 1, w), count }).collect()
}

fn histogram(report: &TimingReport, w: f64) -> (ReportHistogram, BTreeMap<i64, usize>) {
    let slacks: Vec<f64> = report.paths.iter().map(|p| p.slack).collect();
    let mut counts = BTreeMap::new();
    for &s in &slacks {
        *counts.entry(bin_index(s, w)).or_insert(0) += 1;
    }
    let n = slacks.len();
    let mean = if n == 0 { 0.0 } else { sum(slacks.iter().copied()) / n as f64 };
    let h = ReportHistogram {
        corner: report.corner.clone(),
        mode: report.mode.clone(),
        check: report.check,
        paths: n,
        min_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
        max_slack: slacks.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_slack: (mean * 1e9).round() / 1e9,
        bins: to_bins(&counts, w),
    };
    (h, counts)
}

/// Slack histograms per report plus the pooled histogram. Bins are anchored
/// at zero and computed on the decimal form of each slack, so a slack equal
/// to a bin edge always lands in the bin it opens.
pub fn timing_distribution(reports: &[TimingReport], bin_width: f64, exec: Exec) -> Result<Distribution, EdaError> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(EdaError::BadBinWidth(bin_width));
    }
    let per = exec.map(reports, |r| histogram(r, bin_width));
    let mut pooled: BTreeMap<i64, usize> = BTreeMap::new();
    for (_, counts) in &per {
        for (&k, &c) in counts {
            *pooled.entry(k).or_insert(0) += c;
        }
    }
    Ok(Distribution {
        bin_width,
        reports: per.into_iter().map(|(h, _)| h).collect(),
        pooled: to_bins(&pooled, bin_width),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Wns,
    Tns,
    FailingPathCount,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wns" => Some(Metric::Wns),
            "tns" => Some(Metric::Tns),
            "failing_path_count" => Some(Metric::FailingPathCount),
            _ => None,
        }
    }

    pub fn of(self, report: &TimingReport) -> f64 {
        let slacks = report.paths.iter().map(|p| p.slack);
        match self {
            Metric::Wns => slacks.fold(f64::INFINITY, f64::min),
            Metric::Tns => sum(slacks.filter(|s| *s < 0.0).collect::<Vec<_>>()),
            Metric::FailingPathCount => slacks.filter(|s| *s < 0.0).count() as f64,
        }
    }

    /// True when `a` is a worse value than `b`.
    fn worse(self, a: f64, b: f64) -> bool {
        match self {
            Metric::Wns | Metric::Tns => a < b,
            Metric::FailingPathCount => a > b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MetricRow {
    pub corner: String,
    pub mode: String,
    pub check: Check,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MetricTable {
    pub metric: Metric,
    /// Sorted by `(corner, mode, check)`.
    pub rows: Vec<MetricRow>,
    /// First row holding the worst value.
    pub worst: MetricRow,
}

pub fn timing_metric_compare(reports: &[TimingReport], metric: Metric) -> Result<MetricTable, EdaError> {
    let mut rows: Vec<MetricRow> = reports
        .iter()
        .map(|r| MetricRow { corner: r.corner.clone(), mode: r.mode.clone(), check: r.check, value: metric.of(r) })
        .collect();
    rows.sort_by(|a, b| (&a.corner, &a.mode, a.check).cmp(&(&b.corner, &b.mode, b.check)));
    let mut worst = rows.first().cloned().ok_or(EdaError::NoReports)?;
    for r in &rows[1..] {
        if metric.worse(r.value, worst.value) {
            worst = r.clone();
        }
    }
    Ok(MetricTable { metric, rows, worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eda::report::{ClockEdges, Stage, TimingPath};

    fn report(corner: &str, slacks: &[f64]) -> TimingReport {
        let paths = slacks
            .iter()
            .enumerate()
            .map(|(i, &slack)| TimingPath {
                path_id: format!("p{i}"),
                startpoint: "a".into(),
                endpoint: "b".into(),
                clock_net: "clk".into(),
                clock_edges: ClockEdges::BOTH,
                slack,
                stages: vec![Stage {
                    index: 0,
                    net: "n".into(),
                    cell: "c".into(),
                    resistance: 1.0,
                    capacitance: 1.0,
                    delay: 0.1,
                    constraint: 0.0,
                    xtalk_delta: 0.0,
                    aggressors: vec![],
                }],
            })
            .collect();
        TimingReport { corner: corner.into(), mode: "func".into(), check: Check::Max, paths }
    }

    #[test]
    fn single_zero_slack() {
        let d = timing_distribution(&[report("a", &[0.0])], 0.1, Exec::Sequential).unwrap();
        assert_eq!(d.pooled, vec![Bin { k: 0, lo: 0.0, hi: 0.1, count: 1 }]);
    }

    #[test]
    fn hand_binned() {
        let d = timing_distribution(&[report("a", &[-0.15, -0.05, 0.02])], 0.1, Exec::Sequential).unwrap();
        let got: Vec<(f64, f64, usize)> = d.reports[0].bins.iter().map(|b| (b.lo, b.hi, b.count)).collect();
        assert_eq!(got, vec![(-0.2, -0.1, 1), (-0.1, 0.0, 1), (0.0, 0.1, 1)]);
        assert_eq!(d.reports[0].mean_slack, -0.06);
        assert_eq!((d.reports[0].min_slack, d.reports[0].max_slack), (-0.15, 0.02));
    }

    #[test]
    fn pooled_is_additive_and_strategy_independent() {
        let rs = [report("a", &[0.31, -0.2, 0.05]), report("b", &[0.3, 0.0]), report("c", &[-0.41])];
        let seq = timing_distribution(&rs, 0.1, Exec::Sequential).unwrap();
        let total: usize = seq.pooled.iter().map(|b| b.count).sum();
        assert_eq!(total, 6);
        assert_eq!(seq, timing_distribution(&rs, 0.1, Exec::Parallel).unwrap());
        assert!(timing_distribution(&rs, 0.0, Exec::Sequential).is_err());
    }

    #[test]
    fn metrics() {
        let pos = report("a", &[0.2, 0.1]);
        let t = timing_metric_compare(std::slice::from_ref(&pos), Metric::Tns).unwrap();
        assert_eq!(t.rows[0].value, 0.0);
        assert_eq!(Metric::Wns.of(&pos), 0.1);
        let mixed = report("b", &[-0.1, -0.2, 0.3]);
        assert_eq!(Metric::Wns.of(&mixed), -0.2);
        assert_eq!(Metric::Tns.of(&mixed), -0.3);
        assert_eq!(Metric::FailingPathCount.of(&mixed), 2.0);
        let t = timing_metric_compare(&[mixed, pos], Metric::Wns).unwrap();
        assert_eq!(t.rows[0].corner, "a");
        assert_eq!(t.worst.corner, "b");
        assert!(timing_metric_compare(&[], Metric::Wns).is_err());
    }
}
