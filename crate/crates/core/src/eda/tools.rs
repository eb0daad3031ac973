//! Agent-facing bindings for the timing pack.
//!
//! Reports are passed by blackboard key: each key holds report text. Tools
//! that produce findings can store them under `save_as` as a JSON array of
//! anomalies; `append=true` extends an existing array instead of replacing
//! it.

use std::fmt::Write as _;
use std::sync::Arc;

use anyhow::Context as _;
use serde_json::{json, Value};

use super::analysis::{
    aggressor_anomalies, compare_timing_tables, missing_clock_edges, rc_mismatch_pairs, slowest_stage_constraints,
    AggressorCheck, Anomaly, StageFilter,
};
use super::report::{parse_timing_report, render_path, TimingReport};
use super::stats::{timing_distribution, timing_metric_compare, Metric};
use crate::par::Exec;
use crate::toolkit::{Args, Handler, ParamKind, ParamSpec, ToolCatalog, ToolContext, ToolOutput, ToolSpec};

pub const REPORT_LOOKUP: &str = "report_lookup";
pub const MISSING_CLOCK_EDGES: &str = "missing_clock_edges";
pub const RC_MISMATCH_PAIRS: &str = "rc_mismatch_pairs";
pub const AGGRESSOR_ANOMALIES: &str = "aggressor_anomalies";
pub const SLOWEST_STAGE_CONSTRAINTS: &str = "slowest_stage_constraints";
pub const COMPARE_TIMING_TABLES: &str = "compare_timing_tables";
pub const TIMING_DISTRIBUTION: &str = "timing_distribution";
pub const TIMING_METRIC_COMPARE: &str = "timing_metric_compare";

/// Reads every anomaly stored under a findings key.
pub fn read_findings(value: &Value) -> anyhow::Result<Vec<Anomaly>> {
    match value {
        Value::String(s) => serde_json::from_str(s).context("findings text is not a JSON anomaly array"),
        other => serde_json::from_value(other.clone()).context("findings are not an anomaly array"),
    }
}

fn load_report(ctx: &ToolContext<'_>, key: &str) -> anyhow::Result<TimingReport> {
    let artifact = ctx.blackboard.read_artifact(key)?;
    let text = artifact
        .value
        .as_str()
        .ok_or_else(|| anyhow::anyhow!("blackboard key {key:?} does not hold report text"))?;
    Ok(parse_timing_report(text).with_context(|| format!("report {key:?}"))?)
}

fn filter_from(args: &Args<'_>) -> anyhow::Result<StageFilter> {
    let stages = match args.opt_str_list("stages") {
        Some(list) => Some(
            list.iter()
                .map(|s| s.trim().parse::<usize>().with_context(|| format!("stage index {s:?}")))
                .collect::<anyhow::Result<_>>()?,
        ),
        None => None,
    };
    let paths = args.opt_str_list("paths").map(|l| l.into_iter().collect());
    Ok(StageFilter { paths, stages })
}

fn save(args: &Args<'_>, ctx: &ToolContext<'_>, found: &[Anomaly]) -> anyhow::Result<Option<(String, u64)>> {
    let Some(key) = args.opt_str("save_as") else { return Ok(None) };
    let mut all = Vec::new();
    if args.opt_bool("append").unwrap_or(false) && ctx.blackboard.contains(key) {
        all = read_findings(&ctx.blackboard.read_artifact(key)?.value)?;
    }
    all.extend_from_slice(found);
    let version = ctx.blackboard.write_artifact(key, serde_json::to_value(&all)?, ctx.producer)?;
    Ok(Some((key.to_string(), version)))
}

fn findings_output(args: &Args<'_>, ctx: &ToolContext<'_>, found: Vec<Anomaly>) -> anyhow::Result<ToolOutput> {
    let mut content = format!("{} anomalies", found.len());
    if let Some((key, version)) = save(args, ctx, &found)? {
        let _ = write!(content, " (saved to {key}, version {version})");
    }
    for a in &found {
        let _ = write!(content, "\n- {} {}: {}", a.kind, a.key().stage, a.explanation);
    }
    Ok(ToolOutput::with_data(content, json!({ "anomalies": found })))
}

fn save_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::optional("save_as", ParamKind::String, "blackboard key to store findings under"),
        ParamSpec::optional("append", ParamKind::Boolean, "extend existing findings instead of replacing them"),
    ]
}

fn filter_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::optional("stages", ParamKind::StringList, "only these stage indices"),
        ParamSpec::optional("paths", ParamKind::StringList, "only these path ids"),
    ]
}

fn report_param(name: &str) -> ParamSpec {
    ParamSpec::required(name, ParamKind::String, "blackboard key holding report text")
}

fn spec(name: &str, description: &str, params: Vec<ParamSpec>) -> ToolSpec {
    ToolSpec::new(name, description, &format!("eda.{name}"), params)
}

fn report_lookup() -> (ToolSpec, Handler) {
    let s = spec(
        REPORT_LOOKUP,
        "Show a report summary, one path, or every stage touching a net.",
        vec![
            report_param("report"),
            ParamSpec::optional("path", ParamKind::String, "path id to print"),
            ParamSpec::optional("net", ParamKind::String, "net name to search for"),
        ],
    );
    let h: Handler = Arc::new(|args, ctx| {
        let report = load_report(ctx, args.str("report")?)?;
        if let Some(id) = args.opt_str("path") {
            let path = report.path(id).ok_or_else(|| anyhow::anyhow!("no path {id:?} in report"))?;
            let mut text = String::new();
            render_path(&mut text, path);
            return Ok(ToolOutput::with_data(text, serde_json::to_value(path)?));
        }
        if let Some(net) = args.opt_str("net") {
            let mut lines = Vec::new();
            for p in &report.paths {
                for s in &p.stages {
                    if s.net == net || s.aggressors.iter().any(|a| a.net == net) {
                        lines.push(format!("{} stage {} net={} cell={} delay={}", p.path_id, s.index, s.net, s.cell, s.delay));
                    }
                }
            }
            anyhow::ensure!(!lines.is_empty(), "net {net:?} does not appear in the report");
            return Ok(ToolOutput::with_data(lines.join("\n"), json!({ "net": net, "matches": lines.len() })));
        }
        let mut text = format!(
            "corner {} mode {} check {}: {} paths, {} stages",
            report.corner,
            report.mode,
            report.check,
            report.paths.len(),
            report.stage_count()
        );
        for p in &report.paths {
            let _ = write!(text, "\n{} clk={} edges={} slack={} stages={}", p.path_id, p.clock_net, p.clock_edges, p.slack, p.stages.len());
        }
        let ids: Vec<&str> = report.paths.iter().map(|p| p.path_id.as_str()).collect();
        Ok(ToolOutput::with_data(
            text,
            json!({ "corner": report.corner, "mode": report.mode, "check": report.check, "paths": ids }),
        ))
    });
    (s, h)
}

fn missing_clock_edges_tool() -> (ToolSpec, Handler) {
    let mut params = vec![report_param("report")];
    params.extend(save_params());
    let s = spec(MISSING_CLOCK_EDGES, "List setup paths whose clock has no rise/fall annotation.", params);
    let h: Handler = Arc::new(|args, ctx| {
        let report = load_report(ctx, args.str("report")?)?;
        findings_output(args, ctx, missing_clock_edges(&report)?)
    });
    (s, h)
}

fn rc_mismatch_tool() -> (ToolSpec, Handler) {
    let mut params = vec![
        report_param("report"),
        ParamSpec::required("ratio_threshold", ParamKind::Number, "flag pairs whose R or C ratio reaches this (> 1)"),
    ];
    params.extend(filter_params());
    params.extend(save_params());
    let s = spec(RC_MISMATCH_PAIRS, "Find stage pairs within a path with high resistance or capacitance mismatch.", params);
    let h: Handler = Arc::new(|args, ctx| {
        let report = load_report(ctx, args.str("report")?)?;
        let found = rc_mismatch_pairs(&report, args.f64("ratio_threshold")?, &filter_from(args)?)?;
        findings_output(args, ctx, found)
    });
    (s, h)
}

fn aggressor_tool() -> (ToolSpec, Handler) {
    let mut params = vec![
        report_param("report"),
        ParamSpec::required("kind", ParamKind::String, "constraint (xtalk delta vs constraint) or rc (coupling vs capacitance)"),
        ParamSpec::required("threshold", ParamKind::Number, "ratio that flags a stage (> 0)"),
    ];
    params.extend(filter_params());
    params.extend(save_params());
    let s = spec(AGGRESSOR_ANOMALIES, "Find victim stages with unusual crosstalk relative to their aggressors.", params);
    let h: Handler = Arc::new(|args, ctx| {
        let report = load_report(ctx, args.str("report")?)?;
        let kind = args.str("kind")?;
        let check = AggressorCheck::parse(kind).ok_or_else(|| anyhow::anyhow!("kind must be constraint or rc, got {kind:?}"))?;
        let found = aggressor_anomalies(&report, check, args.f64("threshold")?, &filter_from(args)?)?;
        findings_output(args, ctx, found)
    });
    (s, h)
}

fn slowest_tool() -> (ToolSpec, Handler) {
    let mut params = vec![
        report_param("report"),
        ParamSpec::required("top_k", ParamKind::Integer, "number of stages to return"),
        ParamSpec::optional("min_delay", ParamKind::Number, "ignore stages faster than this, ns"),
    ];
    params.extend(save_params());
    let s = spec(SLOWEST_STAGE_CONSTRAINTS, "Rank the slowest stages and report their constraints.", params);
    let h: Handler = Arc::new(|args, ctx| {
        let report = load_report(ctx, args.str("report")?)?;
        let k = args.i64("top_k")?;
        anyhow::ensure!(k >= 1, "top_k must be at least 1");
        let min_delay = args.0.get("min_delay").and_then(Value::as_f64);
        findings_output(args, ctx, slowest_stage_constraints(&report, k as usize, min_delay)?)
    });
    (s, h)
}

fn compare_tool() -> (ToolSpec, Handler) {
    let mut params = vec![report_param("report_a"), report_param("report_b")];
    params.extend(save_params());
    let s = spec(COMPARE_TIMING_TABLES, "Compare two timing tables for stage counts, point values and slack.", params);
    let h: Handler = Arc::new(|args, ctx| {
        let a = load_report(ctx, args.str("report_a")?)?;
        let b = load_report(ctx, args.str("report_b")?)?;
        findings_output(args, ctx, compare_timing_tables(&a, &b)?)
    });
    (s, h)
}

fn load_all(args: &Args<'_>, ctx: &ToolContext<'_>) -> anyhow::Result<Vec<TimingReport>> {
    let keys = args.opt_str_list("reports").ok_or_else(|| anyhow::anyhow!("missing reports"))?;
    keys.iter().map(|k| load_report(ctx, k)).collect()
}

fn store(args: &Args<'_>, ctx: &ToolContext<'_>, value: &Value, content: &mut String) -> anyhow::Result<()> {
    if let Some(key) = args.opt_str("save_as") {
        let version = ctx.blackboard.write_artifact(key, value.clone(), ctx.producer)?;
        let _ = write!(content, "\n(saved to {key}, version {version})");
    }
    Ok(())
}

fn distribution_tool() -> (ToolSpec, Handler) {
    let s = spec(
        TIMING_DISTRIBUTION,
        "Histogram path slacks per report and pooled; bins [k*w, (k+1)*w).",
        vec![
            ParamSpec::required("reports", ParamKind::StringList, "blackboard keys holding report text"),
            ParamSpec::required("bin_width", ParamKind::Number, "bin width, ns"),
            ParamSpec::optional("save_as", ParamKind::String, "blackboard key to store the histogram under"),
        ],
    );
    let h: Handler = Arc::new(|args, ctx| {
        let reports = load_all(args, ctx)?;
        let dist = timing_distribution(&reports, args.f64("bin_width")?, Exec::Sequential)?;
        let mut content = String::new();
        for r in &dist.reports {
            let _ = writeln!(
                content,
                "{} {} {}: {} paths, slack min {} max {} mean {}",
                r.corner, r.mode, r.check, r.paths, r.min_slack, r.max_slack, r.mean_slack
            );
        }
        content.push_str("pooled:");
        for b in &dist.pooled {
            let _ = write!(content, "\n  [{}, {}) {}", b.lo, b.hi, b.count);
        }
        let value = serde_json::to_value(&dist)?;
        store(args, ctx, &value, &mut content)?;
        Ok(ToolOutput::with_data(content, value))
    });
    (s, h)
}

fn metric_tool() -> (ToolSpec, Handler) {
    let s = spec(
        TIMING_METRIC_COMPARE,
        "Tabulate wns, tns or failing_path_count per corner and mode and name the worst.",
        vec![
            ParamSpec::required("reports", ParamKind::StringList, "blackboard keys holding report text"),
            ParamSpec::required("metric", ParamKind::String, "wns, tns or failing_path_count"),
            ParamSpec::optional("save_as", ParamKind::String, "blackboard key to store the table under"),
        ],
    );
    let h: Handler = Arc::new(|args, ctx| {
        let reports = load_all(args, ctx)?;
        let name = args.str("metric")?;
        let metric = Metric::parse(name).ok_or_else(|| anyhow::anyhow!("unknown metric {name:?}"))?;
        let table = timing_metric_compare(&reports, metric)?;
        let mut content = String::new();
        for r in &table.rows {
            let _ = writeln!(content, "{} {} {}: {name} {}", r.corner, r.mode, r.check, r.value);
        }
        let _ = write!(content, "worst: {} {} ({})", table.worst.corner, table.worst.mode, table.worst.value);
        let value = serde_json::to_value(&table)?;
        store(args, ctx, &value, &mut content)?;
        Ok(ToolOutput::with_data(content, value))
    });
    (s, h)
}

/// Every timing tool, keyed by handler reference `eda.<tool name>`.
pub fn eda_catalog() -> ToolCatalog {
    let mut cat = ToolCatalog::new();
    for (spec, handler) in [
        report_lookup(),
        missing_clock_edges_tool(),
        rc_mismatch_tool(),
        aggressor_tool(),
        slowest_tool(),
        compare_tool(),
        distribution_tool(),
        metric_tool(),
    ] {
        cat.add(spec, handler);
    }
    cat
}
