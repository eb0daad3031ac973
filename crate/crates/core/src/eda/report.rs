//! Line-based multi-corner timing report format.
//!
//! ```text
//! corner: <name> mode: <name> check: <max|min>
//! PATH <id> start=<net> end=<net> clk=<net> edges=<rise|fall|rise,fall|none> slack=<num>
//!   STAGE <idx> net=<name> cell=<name> R=<num> C=<num> delay=<num> lc=<num> xtd=<num> aggr=<net:cap;net:cap|none>
//! ```
//!
//! Units: ns for time, ohm for resistance, fF for capacitance. Blank lines
//! are ignored. Rendering writes numbers in their shortest exact form, so
//! `parse(render(r)) == r` for every parsed report.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Setup.
    Max,
    /// Hold.
    Min,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::Max => "max",
            Check::Min => "min",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
pub struct ClockEdges {
    pub rise: bool,
    pub fall: bool,
}

impl ClockEdges {
    pub const NONE: ClockEdges = ClockEdges { rise: false, fall: false };
    pub const BOTH: ClockEdges = ClockEdges { rise: true, fall: true };

    pub fn is_empty(self) -> bool {
        !self.rise && !self.fall
    }
}

impl fmt::Display for ClockEdges {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match (self.rise, self.fall) {
            (true, true) => "rise,fall",
            (true, false) => "rise",
            (false, true) => "fall",
            (false, false) => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Aggressor {
    pub net: String,
    /// Coupling capacitance to the victim, fF.
    pub coupling_cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Stage {
    pub index: usize,
    pub net: String,
    pub cell: String,
    pub resistance: f64,
    pub capacitance: f64,
    pub delay: f64,
    /// Timing-check constraint of the stage, ns.
    pub constraint: f64,
    /// Crosstalk delay delta, ns.
    pub xtalk_delta: f64,
    pub aggressors: Vec<Aggressor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimingPath {
    pub path_id: String,
    pub startpoint: String,
    pub endpoint: String,
    pub clock_net: String,
    pub clock_edges: ClockEdges,
    pub slack: f64,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TimingReport {
    pub corner: String,
    pub mode: String,
    pub check: Check,
    pub paths: Vec<TimingPath>,
}

impl TimingReport {
    pub fn path(&self, id: &str) -> Option<&TimingPath> {
        self.paths.iter().find(|p| p.path_id == id)
    }

    pub fn stage_count(&self) -> usize {
        self.paths.iter().map(|p| p.stages.len()).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("PARSE_ERROR line {line}: expected {expected}, found {found:?}")]
pub struct ParseError {
    pub line: usize,
    pub expected: String,
    pub found: String,
}

struct Cursor<'a> {
    line: usize,
    tokens: std::str::SplitWhitespace<'a>,
}

impl<'a> Cursor<'a> {
    fn err(&self, expected: impl Into<String>, found: &str) -> ParseError {
        ParseError { line: self.line, expected: expected.into(), found: found.to_string() }
    }

    fn next(&mut self, expected: &str) -> Result<&'a str, ParseError> {
        self.tokens.next().ok_or_else(|| self.err(expected, "end of line"))
    }

    fn literal(&mut self, word: &str) -> Result<(), ParseError> {
        let t = self.next(word)?;
        if t == word {
            Ok(())
        } else {
            Err(self.err(format!("`{word}`"), t))
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str, ParseError> {
        let t = self.next(&format!("{key}=..."))?;
        match t.split_once('=') {
            Some((k, v)) if k == key && !v.is_empty() => Ok(v),
            _ => Err(self.err(format!("{key}=<value>"), t)),
        }
    }

    fn number<T: FromStr>(&mut self, key: &str) -> Result<T, ParseError> {
        let v = self.field(key)?;
        v.parse().map_err(|_| self.err(format!("number for {key}"), v))
    }

    fn finite(&mut self, key: &str, non_negative: bool) -> Result<f64, ParseError> {
        let x: f64 = self.number(key)?;
        if !x.is_finite() || (non_negative && x < 0.0) {
            let want = if non_negative { "a finite non-negative number" } else { "a finite number" };
            return Err(self.err(format!("{want} for {key}"), &x.to_string()));
        }
        Ok(x)
    }

    fn end(&mut self) -> Result<(), ParseError> {
        match self.tokens.next() {
            None => Ok(()),
            Some(t) => Err(self.err("end of line", t)),
        }
    }
}

fn parse_edges(c: &Cursor<'_>, v: &str) -> Result<ClockEdges, ParseError> {
    if v == "none" {
        return Ok(ClockEdges::NONE);
    }
    let mut edges = ClockEdges::NONE;
    for part in v.split(',') {
        match part {
            "rise" if !edges.rise => edges.rise = true,
            "fall" if !edges.fall => edges.fall = true,
            _ => return Err(c.err("edges=<rise|fall|rise,fall|none>", v)),
        }
    }
    Ok(edges)
}

fn parse_aggressors(c: &Cursor<'_>, v: &str) -> Result<Vec<Aggressor>, ParseError> {
    if v == "none" {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|item| {
            let (net, cap) = item.rsplit_once(':').ok_or_else(|| c.err("aggressor <net>:<cap>", item))?;
            let coupling_cap: f64 = cap.parse().map_err(|_| c.err("aggressor coupling number", cap))?;
            if net.is_empty() || !coupling_cap.is_finite() || coupling_cap < 0.0 {
                return Err(c.err("aggressor <net>:<non-negative cap>", item));
            }
            Ok(Aggressor { net: net.to_string(), coupling_cap })
        })
        .collect()
}

pub fn parse_timing_report(text: &str) -> Result<TimingReport, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let Some((n, header)) = lines.next() else {
        return Err(ParseError { line: 1, expected: "`corner:` header".into(), found: "end of input".into() });
    };
    let mut c = Cursor { line: n, tokens: header.split_whitespace() };
    c.literal("corner:")?;
    let corner = c.next("corner name")?.to_string();
    c.literal("mode:")?;
    let mode = c.next("mode name")?.to_string();
    c.literal("check:")?;
    let check = match c.next("max or min")? {
        "max" => Check::Max,
        "min" => Check::Min,
        other => return Err(c.err("`max` or `min`", other)),
    };
    c.end()?;

    let mut paths: Vec<TimingPath> = Vec::new();
    let mut last_line = n;
    for (n, line) in lines {
        last_line = n;
        let mut c = Cursor { line: n, tokens: line.split_whitespace() };
        let head = c.next("PATH or STAGE")?;
        match head {
            "PATH" => {
                if let Some(prev) = paths.last() {
                    if prev.stages.is_empty() {
                        return Err(c.err(format!("at least one STAGE for path {}", prev.path_id), "PATH"));
                    }
                }
                let path_id = c.next("path id")?.to_string();
                let startpoint = c.field("start")?.to_string();
                let endpoint = c.field("end")?.to_string();
                let clock_net = c.field("clk")?.to_string();
                let edges_text = c.field("edges")?;
                let clock_edges = parse_edges(&c, edges_text)?;
                let slack = c.finite("slack", false)?;
                c.end()?;
                paths.push(TimingPath { path_id, startpoint, endpoint, clock_net, clock_edges, slack, stages: Vec::new() });
            }
            "STAGE" => {
                if !line.starts_with("  ") {
                    return Err(c.err("STAGE indented by two spaces", line));
                }
                let Some(path) = paths.last_mut() else {
                    return Err(c.err("PATH before the first STAGE", "STAGE"));
                };
                let idx_text = c.next("stage index")?;
                let index: usize = idx_text.parse().map_err(|_| c.err("stage index", idx_text))?;
                if index != path.stages.len() {
                    return Err(c.err(format!("stage index {}", path.stages.len()), idx_text));
                }
                let net = c.field("net")?.to_string();
                let cell = c.field("cell")?.to_string();
                let resistance = c.finite("R", true)?;
                let capacitance = c.finite("C", true)?;
                let delay = c.finite("delay", true)?;
                let constraint = c.finite("lc", false)?;
                let xtalk_delta = c.finite("xtd", false)?;
                let aggr_text = c.field("aggr")?;
                let aggressors = parse_aggressors(&c, aggr_text)?;
                c.end()?;
                path.stages.push(Stage { index, net, cell, resistance, capacitance, delay, constraint, xtalk_delta, aggressors });
            }
            other => return Err(c.err("PATH or STAGE", other)),
        }
    }
    match paths.last() {
        None => Err(ParseError { line: last_line + 1, expected: "at least one PATH".into(), found: "end of input".into() }),
        Some(p) if p.stages.is_empty() => Err(ParseError {
            line: last_line + 1,
            expected: format!("at least one STAGE for path {}", p.path_id),
            found: "end of input".into(),
        }),
        Some(_) => Ok(TimingReport { corner, mode, check, paths }),
    }
}

pub fn render_timing_report(report: &TimingReport) -> String {
    let mut out = format!("corner: {} mode: {} check: {}\n", report.corner, report.mode, report.check);
    for p in &report.paths {
        render_path(&mut out, p);
    }
    out
}

pub(crate) fn render_path(out: &mut String, p: &TimingPath) {
    let _ = writeln!(
        out,
        "PATH {} start={} end={} clk={} edges={} slack={}",
        p.path_id, p.startpoint, p.endpoint, p.clock_net, p.clock_edges, p.slack
    );
    for s in &p.stages {
        let aggr = if s.aggressors.is_empty() {
            "none".to_string()
        } else {
            s.aggressors.iter().map(|a| format!("{}:{}", a.net, a.coupling_cap)).collect::<Vec<_>>().join(";")
        };
        let _ = writeln!(
            out,
            "  STAGE {} net={} cell={} R={} C={} delay={} lc={} xtd={} aggr={}",
            s.index, s.net, s.cell, s.resistance, s.capacitance, s.delay, s.constraint, s.xtalk_delta, aggr
        );
    }
}

impl FromStr for TimingReport {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_timing_report(s)
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_timing_report(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "corner: ss_0p72v_125c mode: func check: max\n\
        PATH p000 start=u1/Q end=u2/D clk=clk_core edges=rise,fall slack=-0.012\n\
        \x20 STAGE 0 net=n1 cell=INVX1 R=12.5 C=1.25 delay=0.031 lc=0.02 xtd=0.001 aggr=a1:0.1;a2:0.25\n";

    #[test]
    fn minimal_report() {
        let r = parse_timing_report(MINIMAL).unwrap();
        assert_eq!((r.corner.as_str(), r.mode.as_str(), r.check), ("ss_0p72v_125c", "func", Check::Max));
        let p = &r.paths[0];
        assert_eq!(p.clock_edges, ClockEdges::BOTH);
        assert_eq!(p.slack, -0.012);
        let s = &p.stages[0];
        assert_eq!((s.resistance, s.capacitance, s.delay, s.constraint, s.xtalk_delta), (12.5, 1.25, 0.031, 0.02, 0.001));
        assert_eq!(s.aggressors[1], Aggressor { net: "a2".into(), coupling_cap: 0.25 });
        assert_eq!(render_timing_report(&r), MINIMAL);
    }

    #[test]
    fn whitespace_is_normalized_by_render() {
        let messy = MINIMAL.replace(" mode:", "   mode:").replace("PATH p000", "PATH   p000");
        let r = parse_timing_report(&messy).unwrap();
        assert_eq!(render_timing_report(&r), MINIMAL);
    }

    #[test]
    fn missing_corner_header() {
        let e = parse_timing_report("mode: func check: max\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.expected.contains("corner:"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let gap = MINIMAL.to_string() + "  STAGE 2 net=n2 cell=BUFX2 R=1 C=1 delay=0.01 lc=0.02 xtd=0 aggr=none\n";
        assert_eq!(parse_timing_report(&gap).unwrap_err().line, 4);
        let neg = MINIMAL.replace("R=12.5", "R=-1");
        assert_eq!(parse_timing_report(&neg).unwrap_err().line, 3);
        let no_stage = "corner: a mode: b check: min\nPATH p start=a end=b clk=c edges=none slack=0\n";
        assert_eq!(parse_timing_report(no_stage).unwrap_err().line, 3);
        let bad_edges = MINIMAL.replace("rise,fall", "rise,rise");
        assert_eq!(parse_timing_report(&bad_edges).unwrap_err().line, 2);
        assert_eq!(parse_timing_report("corner: a mode: b check: max\n").unwrap_err().expected, "at least one PATH");
    }
}
