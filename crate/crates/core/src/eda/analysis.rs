use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::report::{Check, Stage, TimingPath, TimingReport};
use super::EdaError;

/// Stand-in measure for a ratio whose denominator is zero.
pub const UNBOUNDED: f64 = f64::MAX;

/// Tolerance for delay and slack differences between timing tables, ns.
pub const TABLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    MissingClockEdge,
    RcMismatch,
    XtalkConstraint,
    AggressorRc,
    SlowStageConstraint,
    TableMismatch,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 6] = [
        AnomalyKind::MissingClockEdge,
        AnomalyKind::RcMismatch,
        AnomalyKind::XtalkConstraint,
        AnomalyKind::AggressorRc,
        AnomalyKind::SlowStageConstraint,
        AnomalyKind::TableMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::MissingClockEdge => "missing_clock_edge",
            AnomalyKind::RcMismatch => "rc_mismatch",
            AnomalyKind::XtalkConstraint => "xtalk_constraint",
            AnomalyKind::AggressorRc => "aggressor_rc",
            AnomalyKind::SlowStageConstraint => "slow_stage_constraint",
            AnomalyKind::TableMismatch => "table_mismatch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub path_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_index: Option<usize>,
    /// Second stage of a stage pair; always greater than `stage_index`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner_index: Option<usize>,
    pub subjects: Vec<String>,
    pub measure: f64,
    pub explanation: String,
}

/// Identity of an anomaly for set comparison: kind, path and stage
/// reference (`-`, `3` or `1+4`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnomalyKey {
    pub kind: AnomalyKind,
    pub path_id: String,
    pub stage: String,
}

impl fmt::Display for AnomalyKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.path_id, self.stage, self.kind)
    }
}

pub fn stage_ref(stage: Option<usize>, partner: Option<usize>) -> String {
    match (stage, partner) {
        (None, _) => "-".into(),
        (Some(a), None) => a.to_string(),
        (Some(a), Some(b)) => format!("{}+{}", a.min(b), a.max(b)),
    }
}

impl Anomaly {
    pub fn key(&self) -> AnomalyKey {
        AnomalyKey {
            kind: self.kind,
            path_id: self.path_id.clone(),
            stage: stage_ref(self.stage_index, self.partner_index),
        }
    }
}

/// Sorted multiset of anomaly keys.
pub fn key_multiset<'a>(anomalies: impl IntoIterator<Item = &'a Anomaly>) -> Vec<AnomalyKey> {
    let mut keys: Vec<AnomalyKey> = anomalies.into_iter().map(Anomaly::key).collect();
    keys.sort();
    keys
}

/// Restricts stage analyses to some paths and/or stage indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StageFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<BTreeSet<usize>>,
}

impl StageFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn stages(indices: impl IntoIterator<Item = usize>) -> Self {
        Self { paths: None, stages: Some(indices.into_iter().collect()) }
    }

    pub fn with_paths<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Self {
        self.paths = Some(ids.into_iter().map(Into::into).collect());
        self
    }

    fn keeps_path(&self, p: &TimingPath) -> bool {
        self.paths.as_ref().is_none_or(|ids| ids.contains(&p.path_id))
    }

    fn keeps_stage(&self, s: &Stage) -> bool {
        self.stages.as_ref().is_none_or(|ids| ids.contains(&s.index))
    }

    fn select<'a>(&'a self, report: &'a TimingReport) -> impl Iterator<Item = (&'a TimingPath, Vec<&'a Stage>)> + 'a {
        report
            .paths
            .iter()
            .filter(|p| self.keeps_path(p))
            .map(|p| (p, p.stages.iter().filter(|s| self.keeps_stage(s)).collect()))
    }
}

/// `max(a,b) / min(a,b)`; a zero minimum yields [`UNBOUNDED`] when the
/// maximum is positive and `None` when both are zero.
fn spread(a: f64, b: f64) -> Option<f64> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo > 0.0 {
        Some(hi / lo)
    } else if hi > 0.0 {
        Some(UNBOUNDED)
    } else {
        None
    }
}

/// `num / den` for a threshold test; zero denominators yield [`UNBOUNDED`]
/// when the numerator is positive.
fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num > 0.0 {
        Some(UNBOUNDED)
    } else {
        None
    }
}

fn check_threshold(name: &str, value: f64, min_exclusive: f64) -> Result<(), EdaError> {
    if value.is_finite() && value > min_exclusive {
        Ok(())
    } else {
        Err(EdaError::BadThreshold(format!("{name} must be a finite number above {min_exclusive}, got {value}")))
    }
}

/// M1: paths whose clock carries no rise/fall annotation at all.
pub fn missing_clock_edges(report: &TimingReport) -> Result<Vec<Anomaly>, EdaError> {
    if report.check != Check::Max {
        return Err(EdaError::WrongCheck { expected: Check::Max, found: report.check });
    }
    Ok(report
        .paths
        .iter()
        .filter(|p| p.clock_edges.is_empty())
        .map(|p| Anomaly {
            kind: AnomalyKind::MissingClockEdge,
            path_id: p.path_id.clone(),
            stage_index: None,
            partner_index: None,
            subjects: vec![p.clock_net.clone()],
            measure: p.slack,
            explanation: format!("clock {} of path {} has no rise/fall annotation", p.clock_net, p.path_id),
        })
        .collect())
}

/// M2 (and the RC half of M7): stage pairs within a path whose resistance or
/// capacitance spread reaches `ratio_threshold`.
pub fn rc_mismatch_pairs(report: &TimingReport, ratio_threshold: f64, filter: &StageFilter) -> Result<Vec<Anomaly>, EdaError> {
    check_threshold("ratio_threshold", ratio_threshold, 1.0)?;
    let mut out = Vec::new();
    for (path, stages) in filter.select(report) {
        for (i, a) in stages.iter().enumerate() {
            for b in &stages[i + 1..] {
                let r = spread(a.resistance, b.resistance).filter(|x| *x >= ratio_threshold);
                let c = spread(a.capacitance, b.capacitance).filter(|x| *x >= ratio_threshold);
                let (measure, what) = match (r, c) {
                    (None, None) => continue,
                    (Some(r), None) => (r, "R"),
                    (None, Some(c)) => (c, "C"),
                    (Some(r), Some(c)) => (r.max(c), if r >= c { "R" } else { "C" }),
                };
                out.push(Anomaly {
                    kind: AnomalyKind::RcMismatch,
                    path_id: path.path_id.clone(),
                    stage_index: Some(a.index),
                    partner_index: Some(b.index),
                    subjects: vec![a.net.clone(), b.net.clone()],
                    measure,
                    explanation: format!(
                        "{what} ratio {measure} between {} (R={} C={}) and {} (R={} C={}) reaches {ratio_threshold}",
                        a.net, a.resistance, a.capacitance, b.net, b.resistance, b.capacitance
                    ),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AggressorCheck {
    /// Crosstalk delta against the stage constraint.
    Constraint,
    /// Aggressor coupling against the victim capacitance.
    Rc,
}

impl AggressorCheck {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constraint" => Some(Self::Constraint),
            "rc" => Some(Self::Rc),
            _ => None,
        }
    }
}

/// M3/M4 (and the constraint half of M7).
///
/// `constraint` flags a stage when `xtalk_delta >= threshold * constraint`;
/// `rc` flags it when some aggressor's coupling reaches
/// `threshold * capacitance`. The measure is the largest triggering ratio.
pub fn aggressor_anomalies(
    report: &TimingReport,
    check: AggressorCheck,
    threshold: f64,
    filter: &StageFilter,
) -> Result<Vec<Anomaly>, EdaError> {
    check_threshold("threshold", threshold, 0.0)?;
    let mut out = Vec::new();
    for (path, stages) in filter.select(report) {
        for s in stages {
            let anomaly = |kind, measure, subjects, explanation| Anomaly {
                kind,
                path_id: path.path_id.clone(),
                stage_index: Some(s.index),
                partner_index: None,
                subjects,
                measure,
                explanation,
            };
            match check {
                AggressorCheck::Constraint => {
                    let Some(m) = ratio(s.xtalk_delta, s.constraint).filter(|m| *m >= threshold) else { continue };
                    let mut subjects = vec![s.net.clone()];
                    subjects.extend(s.aggressors.iter().map(|a| a.net.clone()));
                    out.push(anomaly(
                        AnomalyKind::XtalkConstraint,
                        m,
                        subjects,
                        format!(
                            "crosstalk delta {} on {} is {m} times its constraint {} (threshold {threshold})",
                            s.xtalk_delta, s.net, s.constraint
                        ),
                    ));
                }
                AggressorCheck::Rc => {
                    let hits: Vec<(&str, f64)> = s
                        .aggressors
                        .iter()
                        .filter_map(|a| ratio(a.coupling_cap, s.capacitance).map(|m| (a.net.as_str(), m)))
                        .filter(|(_, m)| *m >= threshold)
                        .collect();
                    if hits.is_empty() {
                        continue;
                    }
                    let m = hits.iter().map(|(_, m)| *m).fold(f64::MIN, f64::max);
                    let mut subjects = vec![s.net.clone()];
                    subjects.extend(hits.iter().map(|(n, _)| n.to_string()));
                    out.push(anomaly(
                        AnomalyKind::AggressorRc,
                        m,
                        subjects,
                        format!(
                            "aggressor coupling on {} (C={}) reaches {m} times the victim capacitance (threshold {threshold})",
                            s.net, s.capacitance
                        ),
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Ordering of M5: delay descending, then R*C descending, then
/// `(path_id, index)` ascending.
pub fn slow_stage_order(a: (&TimingPath, &Stage), b: (&TimingPath, &Stage)) -> std::cmp::Ordering {
    let rc = |s: &Stage| s.resistance * s.capacitance;
    b.1.delay
        .total_cmp(&a.1.delay)
        .then_with(|| rc(b.1).total_cmp(&rc(a.1)))
        .then_with(|| a.0.path_id.cmp(&b.0.path_id))
        .then_with(|| a.1.index.cmp(&b.1.index))
}

/// M5: the `top_k` slowest stages with their constraints. `min_delay`
/// drops faster stages before ranking.
pub fn slowest_stage_constraints(report: &TimingReport, top_k: usize, min_delay: Option<f64>) -> Result<Vec<Anomaly>, EdaError> {
    if top_k == 0 {
        return Err(EdaError::BadThreshold("top_k must be at least 1".into()));
    }
    if let Some(d) = min_delay {
        if !d.is_finite() {
            return Err(EdaError::BadThreshold(format!("min_delay must be finite, got {d}")));
        }
    }
    let mut ranked: Vec<(&TimingPath, &Stage)> = report
        .paths
        .iter()
        .flat_map(|p| p.stages.iter().map(move |s| (p, s)))
        .filter(|(_, s)| min_delay.is_none_or(|d| s.delay >= d))
        .collect();
    ranked.sort_by(|a, b| slow_stage_order(*a, *b));
    Ok(ranked
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(rank, (p, s))| Anomaly {
            kind: AnomalyKind::SlowStageConstraint,
            path_id: p.path_id.clone(),
            stage_index: Some(s.index),
            partner_index: None,
            subjects: vec![s.net.clone()],
            measure: s.constraint,
            explanation: format!(
                "rank {} slowest stage {} (delay {}, R*C {}) has constraint {}",
                rank + 1,
                s.net,
                s.delay,
                s.resistance * s.capacitance,
                s.constraint
            ),
        })
        .collect())
}

fn table_anomaly(path: &TimingPath, stage: Option<usize>, measure: f64, explanation: String) -> Anomaly {
    let subjects = match stage {
        Some(i) => vec![path.stages[i].net.clone()],
        None => vec![path.startpoint.clone(), path.endpoint.clone()],
    };
    Anomaly {
        kind: AnomalyKind::TableMismatch,
        path_id: path.path_id.clone(),
        stage_index: stage,
        partner_index: None,
        subjects,
        measure,
        explanation,
    }
}

/// M6: differences between two timing tables of the same mode and check.
///
/// For each path in both reports: stage count, per-index delay and slack
/// differences above [`TABLE_TOLERANCE`]. Paths found in only one report are
/// listed after, those of `a` first.
pub fn compare_timing_tables(a: &TimingReport, b: &TimingReport) -> Result<Vec<Anomaly>, EdaError> {
    if a.mode != b.mode || a.check != b.check {
        return Err(EdaError::Incomparable(format!(
            "{}/{} vs {}/{}",
            a.mode, a.check, b.mode, b.check
        )));
    }
    let index_b: BTreeMap<&str, &TimingPath> = b.paths.iter().map(|p| (p.path_id.as_str(), p)).collect();
    let index_a: BTreeMap<&str, &TimingPath> = a.paths.iter().map(|p| (p.path_id.as_str(), p)).collect();
    let mut out = Vec::new();
    for pa in &a.paths {
        let Some(pb) = index_b.get(pa.path_id.as_str()) else { continue };
        if pa.stages.len() != pb.stages.len() {
            out.push(table_anomaly(
                pa,
                None,
                pa.stages.len().abs_diff(pb.stages.len()) as f64,
                format!("path {} has {} stages vs {}", pa.path_id, pa.stages.len(), pb.stages.len()),
            ));
        }
        for (sa, sb) in pa.stages.iter().zip(&pb.stages) {
            let d = (sa.delay - sb.delay).abs();
            if d > TABLE_TOLERANCE {
                out.push(table_anomaly(
                    pa,
                    Some(sa.index),
                    d,
                    format!("stage {} ({}) delay {} vs {}", sa.index, sa.net, sa.delay, sb.delay),
                ));
            }
        }
        let d = (pa.slack - pb.slack).abs();
        if d > TABLE_TOLERANCE {
            out.push(table_anomaly(pa, None, d, format!("path {} slack {} vs {}", pa.path_id, pa.slack, pb.slack)));
        }
    }
    for (report, other, side) in [(a, &index_b, "first"), (b, &index_a, "second")] {
        for p in &report.paths {
            if !other.contains_key(p.path_id.as_str()) {
                out.push(table_anomaly(p, None, 0.0, format!("path {} appears only in the {side} report", p.path_id)));
            }
        }
    }
    Ok(out)
}
